#![allow(dead_code)]

use forkfuse::bev::PointCloud;
use forkfuse::head::{AxisBox, Detection};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// SHA-256 of the 576×576×3 raster of [`golden_cloud`], little-endian f32, channel-major.
pub const GOLDEN_RASTER_SHA256: &str = "63c8a090f7f04da8bf3a83b66561d062ba239275e0b5581e3f923479a6212a05";

/// splitmix64, written out so the fixture does not depend on any RNG crate's stream.
pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in [lo, hi) on a 2⁻²⁴ lattice, exact in f32.
    pub fn uniform(&mut self, lo: f32, hi: f32) -> f32 {
        let u = (self.next_u64() >> 40) as f32 / (1u64 << 24) as f32;
        lo + (hi - lo) * u
    }
}

/// 1000 points spread over ±60 m and z in [-3, 5], so some fall outside the grid and band.
pub fn golden_cloud() -> PointCloud {
    let mut r = SplitMix(2024);
    let pts = (0..1000)
        .map(|_| [r.uniform(-60.0, 60.0), r.uniform(-60.0, 60.0), r.uniform(-3.0, 5.0), r.uniform(0.0, 300.0)])
        .collect();
    PointCloud::new(pts).unwrap()
}

/// Straightforward raster: occupancy, max normalized height, max clipped intensity.
pub fn naive_raster(cloud: &PointCloud, cells: usize, mpc: f64) -> Vec<f32> {
    let mut out = vec![0f32; 3 * cells * cells];
    for p in &cloud.points {
        let (x, y, z, i) = (p[0] as f64, p[1] as f64, p[2] as f64, p[3] as f64);
        if x.abs() >= 50.0 || y.abs() >= 50.0 || z < -2.0 || z > 4.0 {
            continue;
        }
        let col = (x / mpc).floor() as i64 + cells as i64 / 2;
        let row = (y / mpc).floor() as i64 + cells as i64 / 2;
        if col < 0 || row < 0 || col >= cells as i64 || row >= cells as i64 {
            continue;
        }
        let k = row as usize * cells + col as usize;
        let plane = cells * cells;
        out[k] = 1.0;
        out[plane + k] = out[plane + k].max(((z + 2.0) / 6.0) as f32);
        out[2 * plane + k] = out[2 * plane + k].max((i / 255.0).min(1.0) as f32);
    }
    out
}

fn iou(a: &AxisBox, b: &AxisBox) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    let union = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
    if union > 0.0 { inter / union } else { 0.0 }
}

/// Brute force: for every rank k, replay greedy matching of the top-k detections from
/// scratch, then take the 101-point interpolated envelope.
pub fn ap_oracle(dets: &[Vec<Detection>], gts: &[Vec<AxisBox>], thresh: f64) -> f64 {
    let ngt: usize = gts.iter().map(Vec::len).sum();
    if ngt == 0 {
        return 0.0;
    }
    let mut flat: Vec<(usize, Detection)> = dets
        .iter()
        .enumerate()
        .flat_map(|(f, d)| d.iter().map(move |x| (f, *x)))
        .collect();
    flat.sort_by(|a, b| b.1.score.partial_cmp(&a.1.score).unwrap());
    let mut pr = Vec::new();
    for k in 1..=flat.len() {
        let mut used: Vec<Vec<bool>> = gts.iter().map(|g| vec![false; g.len()]).collect();
        let mut tp = 0;
        for (f, d) in &flat[..k] {
            let mut best = None;
            let mut best_iou = thresh;
            for (j, g) in gts[*f].iter().enumerate() {
                let v = iou(&d.bbox, g);
                if !used[*f][j] && v >= best_iou && best.map_or(true, |_| v > best_iou) {
                    best = Some(j);
                    best_iou = v;
                }
            }
            if let Some(j) = best {
                used[*f][j] = true;
                tp += 1;
            }
        }
        pr.push((tp as f64 / k as f64, tp as f64 / ngt as f64));
    }
    (0..=100)
        .map(|i| {
            let r = i as f64 / 100.0;
            pr.iter().filter(|p| p.1 >= r).map(|p| p.0).fold(0.0, f64::max)
        })
        .sum::<f64>()
        / 101.0
}

/// A few frames of integer-grid boxes with jittered detections, distinct scores.
pub fn random_ap_instance(seed: u64) -> (Vec<Vec<Detection>>, Vec<Vec<AxisBox>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = rng.gen_range(1..=4);
    let mut scores: Vec<f64> = (0..64).map(|k| (k as f64 + 0.5) / 64.0).collect();
    let mut next_score = || scores.remove(rng.gen_range(0..scores.len()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
    let mut gts = Vec::new();
    let mut dets = Vec::new();
    for _ in 0..frames {
        let g: Vec<AxisBox> = (0..rng.gen_range(0..=4))
            .map(|_| {
                let (x, y) = (rng.gen_range(0..80) as f64, rng.gen_range(0..80) as f64);
                AxisBox::new(x, y, x + rng.gen_range(5..30) as f64, y + rng.gen_range(5..30) as f64).unwrap()
            })
            .collect();
        let mut d = Vec::new();
        for b in &g {
            for _ in 0..rng.gen_range(0..=2) {
                let j = |rng: &mut ChaCha8Rng| rng.gen_range(-4..=4) as f64;
                let (x1, y1) = (b.x1 + j(&mut rng), b.y1 + j(&mut rng));
                let bb = AxisBox::new(x1, y1, x1 + b.width() + j(&mut rng).abs() + 1.0, y1 + b.height() + 1.0).unwrap();
                d.push(Detection { bbox: bb, score: next_score() });
            }
        }
        for _ in 0..rng.gen_range(0..=3) {
            let (x, y) = (rng.gen_range(0..90) as f64, rng.gen_range(0..90) as f64);
            d.push(Detection { bbox: AxisBox::new(x, y, x + 10.0, y + 10.0).unwrap(), score: next_score() });
        }
        gts.push(g);
        dets.push(d);
    }
    (dets, gts)
}
