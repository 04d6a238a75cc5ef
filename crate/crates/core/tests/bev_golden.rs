mod common;

use common::{golden_cloud, naive_raster, GOLDEN_RASTER_SHA256};
use forkfuse::bev::{rasterize_bev, BevConfig, PointCloud};
use sha2::{Digest, Sha256};

#[test]
fn golden_raster_is_byte_identical() {
    let img = rasterize_bev(&golden_cloud(), &BevConfig::paper());
    assert_eq!(img.grid.shape(), [3, 576, 576]);
    let digest = hex::encode(Sha256::digest(img.to_bytes()));
    assert_eq!(digest, GOLDEN_RASTER_SHA256);
}

#[test]
fn matches_the_naive_raster() {
    let cloud = golden_cloud();
    for cfg in [BevConfig::paper(), BevConfig::desk()] {
        let img = rasterize_bev(&cloud, &cfg);
        assert_eq!(img.grid.data(), naive_raster(&cloud, cfg.cells, cfg.meters_per_cell).as_slice());
    }
}

#[test]
fn single_point_at_the_origin_lands_in_the_center_cell() {
    let cloud = PointCloud::new(vec![[0.0, 0.0, 1.0, 127.5]]).unwrap();
    let img = rasterize_bev(&cloud, &BevConfig::paper());
    let plane = 576 * 576;
    let at = 288 * 576 + 288;
    assert_eq!(img.grid.data()[at], 1.0);
    assert_eq!(img.grid.data()[plane + at], 0.5);
    assert_eq!(img.grid.data()[2 * plane + at], 0.5);
    assert_eq!(img.grid.data().iter().filter(|&&v| v != 0.0).count(), 3);
}
