use std::path::Path;

use crate::error::{Error, Result};

/// Lidar returns `(x, y, z, intensity)` in meters, radar frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f32; 4]>,
}

pub const RECORD_BYTES: usize = 16;

impl PointCloud {
    pub fn new(points: Vec<[f32; 4]>) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if !p.iter().all(|v| v.is_finite()) || p[3] < 0.0 {
                return Err(Error::Input(format!("point {i} {p:?} is not finite or has negative intensity")));
            }
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.points.iter().flatten().flat_map(|v| v.to_le_bytes()).collect()
    }

    /// Parses consecutive little-endian `f32 × 4` records.
    pub fn from_bytes(bytes: &[u8], context: &str) -> Result<Self> {
        let whole = bytes.len() / RECORD_BYTES * RECORD_BYTES;
        if whole != bytes.len() {
            return Err(Error::Format {
                context: context.to_string(),
                offset: whole as u64,
                message: format!(
                    "trailing partial record of {} bytes",
                    bytes.len() - whole
                ),
            });
        }
        let mut points = Vec::with_capacity(bytes.len() / RECORD_BYTES);
        for (i, rec) in bytes.chunks_exact(RECORD_BYTES).enumerate() {
            let p: [f32; 4] = std::array::from_fn(|k| {
                f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().expect("4 bytes"))
            });
            if !p.iter().all(|v| v.is_finite()) || p[3] < 0.0 {
                return Err(Error::Format {
                    context: context.to_string(),
                    offset: (i * RECORD_BYTES) as u64,
                    message: format!("invalid point {p:?}"),
                });
            }
            points.push(p);
        }
        Ok(Self { points })
    }
}

pub fn load_pointcloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    PointCloud::from_bytes(&bytes, &path.display().to_string())
}

pub fn save_pointcloud(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, cloud.to_bytes()).map_err(|e| Error::io(path, e))
}
