use rand::Rng;

use crate::head::AxisBox;
use crate::nn::Tensor;

use super::config::AugmentConfig;

/// Boxes keeping less than this share of their area after cropping are dropped.
pub const MIN_VISIBLE_FRACTION: f64 = 0.3;
const CROP_ATTEMPTS: usize = 10;

/// A geometric transform shared by both modalities: crop window `(x0, y0, side_w, side_h)` in
/// source pixels rescaled to the full image, then an optional horizontal flip.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairTransform {
    pub crop: (f64, f64, f64, f64),
    pub flip: bool,
}

impl PairTransform {
    pub fn identity(h: usize, w: usize) -> Self {
        Self {
            crop: (0.0, 0.0, w as f64, h as f64),
            flip: false,
        }
    }

    /// Source pixel sampled for output pixel `(y, x)` (nearest neighbour).
    fn source(&self, y: usize, x: usize, h: usize, w: usize) -> (usize, usize) {
        let (x0, y0, cw, ch) = self.crop;
        let xo = if self.flip { w - 1 - x } else { x };
        let sx = x0 + (xo as f64 + 0.5) * cw / w as f64;
        let sy = y0 + (y as f64 + 0.5) * ch / h as f64;
        (
            (sy.floor() as usize).min(h - 1),
            (sx.floor() as usize).min(w - 1),
        )
    }

    pub fn apply_image(&self, img: &Tensor<f32>) -> Tensor<f32> {
        let s = img.shape();
        let (c, h, w) = (s[0], s[1], s[2]);
        let mut out = Vec::with_capacity(img.numel());
        let map: Vec<usize> = (0..h * w)
            .map(|i| {
                let (sy, sx) = self.source(i / w, i % w, h, w);
                sy * w + sx
            })
            .collect();
        for ch in 0..c {
            let plane = &img.data()[ch * h * w..(ch + 1) * h * w];
            out.extend(map.iter().map(|&k| plane[k]));
        }
        Tensor::new(s.to_vec(), out).expect("same shape")
    }

    /// Maps boxes into the output frame, dropping those left mostly outside the crop.
    pub fn apply_boxes(&self, boxes: &[AxisBox], h: usize, w: usize) -> Vec<AxisBox> {
        let (x0, y0, cw, ch) = self.crop;
        let (sx, sy) = (w as f64 / cw, h as f64 / ch);
        boxes
            .iter()
            .filter_map(|b| {
                let mapped = AxisBox {
                    x1: (b.x1 - x0) * sx,
                    y1: (b.y1 - y0) * sy,
                    x2: (b.x2 - x0) * sx,
                    y2: (b.y2 - y0) * sy,
                };
                let clipped = mapped.clip(w as f64, h as f64);
                let keep = clipped.area() > 0.0
                    && clipped.area() >= MIN_VISIBLE_FRACTION * mapped.area();
                keep.then(|| if self.flip { clipped.hflip(w as f64) } else { clipped })
            })
            .collect()
    }
}

/// Draws one transform; a crop that would lose every box is redrawn, falling back to the
/// full image.
pub fn draw_transform(
    gts: &[AxisBox],
    h: usize,
    w: usize,
    cfg: &AugmentConfig,
    rng: &mut impl Rng,
) -> PairTransform {
    let mut t = PairTransform::identity(h, w);
    if !cfg.enabled {
        return t;
    }
    let (lo, hi) = cfg.crop_scale_range;
    for _ in 0..CROP_ATTEMPTS {
        let s = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        let (cw, ch) = (s * w as f64, s * h as f64);
        let x0 = rng.gen_range(0.0..=(w as f64 - cw));
        let y0 = rng.gen_range(0.0..=(h as f64 - ch));
        let cand = PairTransform {
            crop: (x0, y0, cw, ch),
            flip: false,
        };
        if gts.is_empty() || !cand.apply_boxes(gts, h, w).is_empty() {
            t = cand;
            break;
        }
    }
    t.flip = rng.gen::<f64>() < cfg.hflip_p;
    t
}

/// Applies the same random flip and crop-and-rescale to both images and the boxes.
pub fn augment_pair(
    radar: &Tensor<f32>,
    lidar: &Tensor<f32>,
    gts: &[AxisBox],
    cfg: &AugmentConfig,
    rng: &mut impl Rng,
) -> (Tensor<f32>, Tensor<f32>, Vec<AxisBox>) {
    let (h, w) = (radar.shape()[1], radar.shape()[2]);
    let t = draw_transform(gts, h, w, cfg, rng);
    (t.apply_image(radar), t.apply_image(lidar), t.apply_boxes(gts, h, w))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn flip_maps_boxes_and_pixels() {
        let t = PairTransform { crop: (0.0, 0.0, 100.0, 60.0), flip: true };
        let b = AxisBox::new(10.0, 20.0, 30.0, 40.0).unwrap();
        assert_eq!(t.apply_boxes(&[b], 60, 100), vec![AxisBox::new(70.0, 20.0, 90.0, 40.0).unwrap()]);
        let img = Tensor::from_fn(vec![1, 2, 3], |i| i as f32);
        let t = PairTransform { flip: true, ..PairTransform::identity(2, 3) };
        assert_eq!(t.apply_image(&img).data(), &[2.0, 1.0, 0.0, 5.0, 4.0, 3.0]);
    }

    #[test]
    fn identity_crop_is_unchanged() {
        let img = Tensor::from_fn(vec![3, 8, 8], |i| (i * 7 % 5) as f32);
        let b = AxisBox::new(1.0, 2.0, 5.0, 7.0).unwrap();
        let t = PairTransform::identity(8, 8);
        assert_eq!(t.apply_image(&img), img);
        assert_eq!(t.apply_boxes(&[b], 8, 8), vec![b]);
    }

    #[test]
    fn both_modalities_share_the_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let radar = Tensor::from_fn(vec![3, 16, 16], |i| (i % 256) as f32);
        let (r, l, _) = augment_pair(&radar, &radar, &[], &AugmentConfig::default(), &mut rng);
        assert_eq!(r, l);
    }

    #[test]
    fn mostly_cropped_boxes_are_dropped_but_one_survives() {
        let t = PairTransform { crop: (50.0, 0.0, 50.0, 100.0), flip: false };
        let half_out = AxisBox::new(40.0, 10.0, 60.0, 20.0).unwrap();
        let mostly_out = AxisBox::new(10.0, 10.0, 55.0, 20.0).unwrap();
        let kept = t.apply_boxes(&[half_out, mostly_out], 100, 100);
        assert_eq!(kept, vec![AxisBox::new(0.0, 10.0, 20.0, 20.0).unwrap()]);

        let cfg = AugmentConfig { crop_scale_range: (0.5, 0.5), ..Default::default() };
        let gt = [AxisBox::new(2.0, 2.0, 12.0, 12.0).unwrap()];
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            assert!(!draw_transform(&gt, 100, 100, &cfg, &mut rng).apply_boxes(&gt, 100, 100).is_empty());
        }
    }
}
