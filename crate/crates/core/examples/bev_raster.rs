//! Point cloud to bird's-eye-view raster, PNG export, and annotation parsing.

use forkfuse::bev::{
    export_png, obb_to_aabb, parse_annotations, rasterize_bev, save_pointcloud, load_pointcloud, upsample_bev,
    BevConfig, PointCloud,
};

pub fn run() -> forkfuse::Result<()> {
    // a ring of returns at 20 m plus one point below the height band
    let mut points: Vec<[f32; 4]> = (0..720)
        .map(|i| {
            let a = i as f32 * std::f32::consts::TAU / 720.0;
            [20.0 * a.cos(), 20.0 * a.sin(), 0.5, (i % 256) as f32]
        })
        .collect();
    points.push([1.0, 1.0, -5.0, 200.0]);
    let cloud = PointCloud::new(points)?;

    let dir = std::env::temp_dir().join("forkfuse-example-bev");
    std::fs::create_dir_all(&dir).map_err(|e| forkfuse::Error::io(&dir, e))?;
    let path = dir.join("ring.bin");
    save_pointcloud(&path, &cloud)?;
    let cloud = load_pointcloud(&path)?;

    let cfg = BevConfig::desk();
    let img = rasterize_bev(&cloud, &cfg);
    let occupied = img.grid.data()[..cfg.cells * cfg.cells].iter().filter(|&&v| v > 0.0).count();
    println!("{} points -> {}x{} grid, {occupied} occupied cells", cloud.len(), img.side(), img.side());

    let up = upsample_bev(&img)?;
    export_png(&up.grid, dir.join("ring.png"))?;
    println!("wrote {}", dir.join("ring.png").display());

    let ann = parse_annotations("frame_7 car 12.0 30.0 20.0 10.0 30\n", "inline")?;
    for (frame, obb) in &ann {
        println!("{frame}: {obb:?} -> {:?}", obb_to_aabb(obb));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> forkfuse::Result<()> {
    run()
}
