//! Paired synthetic radar/Lidar scenes with known vehicle boxes.

mod dataset;
mod scene;

pub use dataset::{
    generate_dataset, generate_samples, scene_name, split_ids, Manifest, ManifestEntry, Sample,
    Split, ANNOTATION_FILE, MANIFEST_FILE,
};
pub use scene::{
    mean_in_box, render_scene_pair, scene_seed, OcclusionMode, ScenePair, SceneSpec,
    SensorNoiseConfig,
};
