//! Lidar point clouds to bird's-eye-view rasters, radar frame loading and annotations.

mod annotations;
mod image;
mod pointcloud;
mod raster;

pub use annotations::{
    format_annotations, load_annotations, normalize_angle, obb_corners, obb_to_aabb,
    parse_annotations, OrientedBox, VEHICLE_CLASSES,
};
pub use image::{export_png, load_radar_png, save_gray_png, to_u8};
pub use pointcloud::{load_pointcloud, save_pointcloud, PointCloud, RECORD_BYTES};
pub use raster::{rasterize_bev, upsample2x, upsample_bev, BevConfig, BevImage};
