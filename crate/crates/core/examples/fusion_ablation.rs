//! A miniature fusion-mode ablation: every variant, two seeds, one table.

use forkfuse::backbone::{ModelConfig, WidthMult};
use forkfuse::synth::{generate_samples, OcclusionMode, Sample, SceneSpec};
use forkfuse::train::{ablation_csv, format_table, fusion_grid, run_ablation, TrainConfig};

pub fn run() -> forkfuse::Result<()> {
    let spec = SceneSpec {
        image_hw: (64, 64),
        size_range: (16.0, 28.0),
        n_vehicles: 2,
        occlusion_mode: OcclusionMode::RadarBlind,
        occlusion_fraction: 0.3,
        ..SceneSpec::default()
    };
    let scenes: Vec<Sample> = generate_samples(40, &spec)?
        .iter()
        .map(|(id, p)| Sample::from_pair(format!("scene_{id}"), p))
        .collect();
    let (train_set, test_set) = scenes.split_at(32);

    let base = ModelConfig {
        input_hw: (64, 64),
        patch: 8,
        width_mult: WidthMult::new(1, 16)?,
        dw_kernel: 3,
        dilations: vec![1, 2, 3],
        anchor_scales: vec![16.0, 32.0],
        block1_repeats: 1,
        block2_repeats: 1,
        pfs_repeats: 1,
        ..ModelConfig::desk()
    };
    let tc = TrainConfig { iterations: 300, lr_drop_iter: 225, minibatch: 64, ..TrainConfig::desk() };
    let rows = run_ablation(&fusion_grid(&base, true), &[0, 1], train_set, test_set, &tc, |_| {})?;
    print!("{}", ablation_csv(&rows));
    print!("{}", format_table(&rows));
    Ok(())
}

#[allow(dead_code)]
fn main() -> forkfuse::Result<()> {
    run()
}
