use crate::error::{Error, Result};
use crate::nn::Tensor;

use super::pointcloud::PointCloud;

/// Grid geometry and normalization constants.
#[derive(Clone, Debug, PartialEq)]
pub struct BevConfig {
    pub cells: usize,
    pub meters_per_cell: f64,
    /// Points with `|x|` or `|y|` at or beyond this are dropped.
    pub half_extent: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub i_max: f64,
}

impl BevConfig {
    /// 576 cells of 0.174 m over a 100 m square.
    pub fn paper() -> Self {
        Self {
            cells: 576,
            meters_per_cell: 0.174,
            half_extent: 50.0,
            z_min: -2.0,
            z_max: 4.0,
            i_max: 255.0,
        }
    }

    /// Same extent at one sixth of the resolution (96 cells, upsampled to 192).
    pub fn desk() -> Self {
        Self {
            cells: 96,
            meters_per_cell: 0.174 * 6.0,
            ..Self::paper()
        }
    }

    /// Cell index of a coordinate, if inside the grid.
    pub fn cell(&self, v: f64) -> Option<usize> {
        if v.abs() >= self.half_extent {
            return None;
        }
        let c = (v / self.meters_per_cell).floor() as i64 + (self.cells / 2) as i64;
        (0..self.cells as i64).contains(&c).then_some(c as usize)
    }

    /// Center coordinate of a cell in meters.
    pub fn cell_center(&self, c: usize) -> f64 {
        (c as f64 - (self.cells / 2) as f64 + 0.5) * self.meters_per_cell
    }
}

/// Three-channel raster (occupancy, height, intensity), `3×H×W`, row from `y`, column from `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct BevImage {
    pub grid: Tensor<f32>,
    pub meters_per_cell: f64,
    pub upsampled: bool,
}

impl BevImage {
    pub fn side(&self) -> usize {
        self.grid.shape()[1]
    }

    /// Raw little-endian bytes, channel-major.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.grid.data().iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}

/// Max-pools points into the grid. Points outside the extent or the `[z_min, z_max]`
/// band are discarded.
pub fn rasterize_bev(cloud: &PointCloud, cfg: &BevConfig) -> BevImage {
    let n = cfg.cells;
    let mut grid = Tensor::<f32>::zeros(vec![3, n, n]);
    let span = cfg.z_max - cfg.z_min;
    let data = grid.data_mut();
    for p in &cloud.points {
        let (x, y, z, i) = (p[0] as f64, p[1] as f64, p[2] as f64, p[3] as f64);
        if !(cfg.z_min..=cfg.z_max).contains(&z) {
            continue;
        }
        let (Some(col), Some(row)) = (cfg.cell(x), cfg.cell(y)) else {
            continue;
        };
        let at = row * n + col;
        let height = ((z - cfg.z_min) / span) as f32;
        let inten = (i / cfg.i_max).min(1.0) as f32;
        data[at] = 1.0;
        data[n * n + at] = data[n * n + at].max(height);
        data[2 * n * n + at] = data[2 * n * n + at].max(inten);
    }
    BevImage {
        grid,
        meters_per_cell: cfg.meters_per_cell,
        upsampled: false,
    }
}

/// Nearest-neighbour 2× upsampling of any `C×N×N` tensor.
pub fn upsample2x(t: &Tensor<f32>) -> Result<Tensor<f32>> {
    let &[c, h, w] = t.shape() else {
        return Err(Error::config(format!("expected C×H×W, got {:?}", t.shape())));
    };
    let (oh, ow) = (2 * h, 2 * w);
    Ok(Tensor::from_fn(vec![c, oh, ow], |i| {
        let (ch, rest) = (i / (oh * ow), i % (oh * ow));
        let (y, x) = (rest / ow, rest % ow);
        t.data()[(ch * h + y / 2) * w + x / 2]
    }))
}

/// Doubles a raster's resolution; each source cell becomes an identical 2×2 block.
pub fn upsample_bev(img: &BevImage) -> Result<BevImage> {
    let s = img.grid.shape();
    if img.upsampled || s.len() != 3 || s[0] != 3 || s[1] != s[2] || s[1] == 0 {
        return Err(Error::config(format!(
            "upsampling expects a native 3×N×N raster, got {s:?}{}",
            if img.upsampled { " (already upsampled)" } else { "" }
        )));
    }
    Ok(BevImage {
        grid: upsample2x(&img.grid)?,
        meters_per_cell: img.meters_per_cell / 2.0,
        upsampled: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_cloud_is_blank() {
        let img = rasterize_bev(&PointCloud::default(), &BevConfig::paper());
        assert_eq!(img.grid.shape(), &[3, 576, 576]);
        assert!(img.grid.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_center_point() {
        let cloud = PointCloud::new(vec![[0.0, 0.0, 0.0, 255.0]]).unwrap();
        let img = rasterize_bev(&cloud, &BevConfig::paper());
        let n = 576;
        let at = 288 * n + 288;
        assert_eq!(img.grid.data().iter().filter(|&&v| v != 0.0).count(), 3);
        assert_eq!(img.grid.data()[at], 1.0);
        assert_eq!(img.grid.data()[n * n + at], (2.0f64 / 6.0) as f32);
        assert_eq!(img.grid.data()[2 * n * n + at], 1.0);
    }

    #[test]
    fn out_of_band_points_are_dropped() {
        let cfg = BevConfig::paper();
        let cloud = PointCloud::new(vec![
            [50.0, 0.0, 0.0, 10.0],
            [0.0, -50.1, 0.0, 10.0],
            [1.0, 1.0, 4.5, 10.0],
            [1.0, 1.0, -2.5, 10.0],
        ])
        .unwrap();
        assert!(rasterize_bev(&cloud, &cfg).grid.data().iter().all(|&v| v == 0.0));
        assert_eq!(cfg.cell(-49.99), Some(0));
        assert_eq!(cfg.cell(49.99), Some(575));
    }

    #[test]
    fn upsampling_blocks() {
        let cloud = PointCloud::new(vec![[3.0, -7.0, 1.0, 100.0]]).unwrap();
        let img = rasterize_bev(&cloud, &BevConfig::paper());
        let up = upsample_bev(&img).unwrap();
        assert_eq!(up.grid.shape(), &[3, 1152, 1152]);
        let occupied = up.grid.data()[..1152 * 1152].iter().filter(|&&v| v == 1.0).count();
        assert_eq!(occupied, 4);
        assert!(upsample_bev(&up).is_err());

        let checker = Tensor::from_fn(vec![3, 4, 4], |i| ((i / 4 + i % 4) % 2) as f32);
        let img = BevImage { grid: checker.clone(), meters_per_cell: 1.0, upsampled: false };
        let big = upsample_bev(&img).unwrap().grid;
        for y in 0..8 {
            for x in 0..8 {
                assert_eq!(big.data()[y * 8 + x], checker.data()[(y / 2) * 4 + x / 2]);
            }
        }
    }
}
