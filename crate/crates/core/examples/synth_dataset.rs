//! Paired synthetic radar/Lidar scenes written to disk and read back.

use forkfuse::synth::{generate_dataset, mean_in_box, render_scene_pair, Manifest, OcclusionMode, SceneSpec, Split};

pub fn run() -> forkfuse::Result<()> {
    let spec = SceneSpec {
        occlusion_mode: OcclusionMode::RadarBlind,
        occlusion_fraction: 0.5,
        seed: 4,
        ..SceneSpec::default()
    };
    let pair = render_scene_pair(&spec)?;
    println!("{} vehicles, hidden from radar: {:?}", pair.gts.len(), pair.hidden_radar);
    for (i, b) in pair.gts.iter().enumerate() {
        println!(
            "  box {i}: radar mean {:.3}, lidar mean {:.3}",
            mean_in_box(&pair.radar, b),
            mean_in_box(&pair.lidar, b)
        );
    }

    let dir = std::env::temp_dir().join("forkfuse-example-synth");
    let manifest = generate_dataset(10, &spec, &dir)?;
    println!("wrote {} scenes, hash {}", manifest.entries.len(), &manifest.hash()[..16]);
    let back = Manifest::load(&dir)?;
    let train = back.load_samples(Some(Split::Train))?;
    println!("train split: {} scenes, first is {} with {} boxes", train.len(), train[0].name, train[0].gts.len());
    Ok(())
}

#[allow(dead_code)]
fn main() -> forkfuse::Result<()> {
    run()
}
