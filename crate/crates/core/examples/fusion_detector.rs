//! The full detector: both branches, gates, the fused head and decoded detections.
//! Also saves and reloads a checkpoint.

use forkfuse::backbone::{FusionMode, ModelConfig, WidthMult};
use forkfuse::nn::{Graph, Tensor};
use forkfuse::synth::{render_scene_pair, SceneSpec};
use forkfuse::Detector;

pub fn run() -> forkfuse::Result<()> {
    let cfg = ModelConfig {
        width_mult: WidthMult::new(1, 8)?,
        fusion_mode: FusionMode::Mid,
        ..ModelConfig::desk()
    };
    let model = Detector::<f32>::new(cfg, 0)?;
    println!("{} parameters, {} anchors", model.parameter_count(), model.anchors.len());

    let pair = render_scene_pair(&SceneSpec::default())?;
    let radar = Tensor::stack(&[&pair.radar])?;
    let lidar = Tensor::stack(&[&pair.lidar])?;

    let mut g = Graph::new();
    let (r, l) = (g.input(radar.clone()), g.input(lidar.clone()));
    let out = model.forward(&mut g, r, Some(l), false)?;
    let shape = |v| g.value(v).shape().to_vec();
    println!("radar features {:?}", shape(out.branches.radar_feat));
    println!("fused features {:?}", shape(out.branches.fused_feat));
    println!("logits {:?}, deltas {:?}", shape(out.logits), shape(out.deltas));

    // untrained scores sit near 0.5, so many anchors clear the threshold
    let dets = model.predict(&radar, Some(&lidar), &model.detect_config())?;
    println!("{} detections before training, {} ground-truth boxes", dets[0].len(), pair.gts.len());

    let path = std::env::temp_dir().join("forkfuse-example-detector.ffck");
    model.save(&path)?;
    let back = Detector::<f32>::load(&path)?;
    let (a, _) = model.infer(&radar, Some(&lidar))?;
    let (b, _) = back.infer(&radar, Some(&lidar))?;
    println!("reloaded checkpoint reproduces logits: {}", a == b);
    Ok(())
}

#[allow(dead_code)]
fn main() -> forkfuse::Result<()> {
    run()
}
