use std::path::Path;

use image::{GrayImage, ImageBuffer, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::nn::Tensor;

fn image_err(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Format {
            context: path.display().to_string(),
            offset: 0,
            message: other.to_string(),
        },
    }
}

/// `round_half_up(255·v)` for v clamped to [0, 1].
pub fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) as f64 * 255.0 + 0.5).floor() as u8
}

/// Writes a `3×H×W` tensor with values in [0, 1] as an 8-bit RGB PNG.
pub fn export_png(grid: &Tensor<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let &[3, h, w] = grid.shape() else {
        return Err(Error::config(format!("PNG export needs 3×H×W, got {:?}", grid.shape())));
    };
    let d = grid.data();
    let img: RgbImage = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let at = y as usize * w + x as usize;
        Rgb([to_u8(d[at]), to_u8(d[h * w + at]), to_u8(d[2 * h * w + at])])
    });
    img.save(path).map_err(|e| image_err(path, e))
}

/// Loads a radar frame (any PNG), converts to gray and replicates it to 3 channels in [0, 1].
pub fn load_radar_png(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    let gray: GrayImage = image::open(path).map_err(|e| image_err(path, e))?.into_luma8();
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let plane: Vec<f32> = gray.into_raw().into_iter().map(|v| v as f32 / 255.0).collect();
    let mut data = Vec::with_capacity(3 * plane.len());
    for _ in 0..3 {
        data.extend_from_slice(&plane);
    }
    Tensor::new(vec![3, h, w], data)
}

/// Writes the first channel of a `C×H×W` tensor as an 8-bit gray PNG.
pub fn save_gray_png(t: &Tensor<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let &[_, h, w] = t.shape() else {
        return Err(Error::config(format!("expected C×H×W, got {:?}", t.shape())));
    };
    let raw: Vec<u8> = t.data()[..h * w].iter().map(|&v| to_u8(v)).collect();
    let img = GrayImage::from_raw(w as u32, h as u32, raw).expect("buffer size");
    img.save(path).map_err(|e| image_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(to_u8(0.0), 0);
        assert_eq!(to_u8(1.0), 255);
        assert_eq!(to_u8(0.5), 128);
        assert_eq!(to_u8(2.0), 255);
    }

    #[test]
    fn gray_round_trip_replicates_channels() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.png");
        let t = Tensor::from_fn(vec![1, 4, 5], |i| i as f32 / 19.0);
        save_gray_png(&t, &p).unwrap();
        let back = load_radar_png(&p).unwrap();
        assert_eq!(back.shape(), &[3, 4, 5]);
        for c in 0..3 {
            for i in 0..20 {
                let v = back.data()[c * 20 + i];
                assert!((v - t.data()[i]).abs() <= 0.5 / 255.0 + 1e-6);
            }
        }
        let q = dir.path().join("b.png");
        export_png(&Tensor::from_fn(vec![3, 4, 5], |i| (i % 2) as f32), &q).unwrap();
        assert!(load_radar_png(dir.path().join("missing.png")).is_err());
    }
}
