//! A short training run on a scaled-down model, with the loss log and AP@0.5.
//!
//! The desk preset trains with `TrainConfig::desk()` on 192x192 scenes; this example
//! shrinks everything so it finishes in seconds. AP is measured on the training scenes.

use forkfuse::backbone::{ModelConfig, WidthMult};
use forkfuse::synth::{generate_samples, Sample, SceneSpec};
use forkfuse::train::{evaluate, train, AugmentConfig, TrainConfig};
use forkfuse::Detector;

pub fn run() -> forkfuse::Result<()> {
    let spec = SceneSpec { image_hw: (64, 64), size_range: (16.0, 28.0), n_vehicles: 2, ..SceneSpec::default() };
    let data: Vec<Sample> = generate_samples(8, &spec)?
        .iter()
        .map(|(id, p)| Sample::from_pair(format!("scene_{id}"), p))
        .collect();

    let cfg = ModelConfig {
        input_hw: (64, 64),
        patch: 8,
        width_mult: WidthMult::new(1, 16)?,
        dw_kernel: 3,
        dilations: vec![1, 2, 3],
        block1_repeats: 1,
        block2_repeats: 1,
        pfs_repeats: 1,
        anchor_scales: vec![16.0, 32.0],
        ..ModelConfig::desk()
    };
    let mut model = Detector::<f32>::new(cfg, 1)?;
    let tc = TrainConfig {
        iterations: 200,
        lr_drop_iter: 150,
        minibatch: 64,
        // eight scenes are memorised rather than generalised, so skip the crops
        augment: AugmentConfig { enabled: false, ..AugmentConfig::default() },
        ..TrainConfig::desk()
    };
    let log = train(&mut model, &data, &tc, |r| {
        if r.iter % 50 == 0 {
            println!("iter {:>3}  loss {:.4}  lr {}", r.iter, r.total, r.lr);
        }
    })?;
    println!("mean loss: first 10 {:.4}, last 10 {:.4}", log.mean_total(10, false), log.mean_total(10, true));
    print!("{}", &log.to_csv()[..log.to_csv().find('\n').unwrap() + 1]);

    let r = evaluate(&model, &data, &model.detect_config())?;
    print!("{}", r.summary());
    Ok(())
}

#[allow(dead_code)]
fn main() -> forkfuse::Result<()> {
    run()
}
