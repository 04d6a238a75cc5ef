//! The `forkfuse` command line: config files, run manifests and the subcommands.
//!
//! Config files are flat `key = value` text with `model.`, `train.` and `data.` prefixes.
//! Command-line flags override the file, which overrides the desk presets. Every run
//! writes `run_manifest.txt` under `--out` before any result; the manifest is itself a
//! valid config file, so `--config run_manifest.txt` replays the run.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use crate::backbone::{FusionMode, ModelConfig};
use crate::bev::{export_png, load_pointcloud, rasterize_bev, upsample_bev, BevConfig};
use crate::error::{Error, Result};
use crate::gradsuite::{run_gradient_suite, DEFAULT_INSTANCES};
use crate::model::Detector;
use crate::nn::checkpoint;
use crate::synth::{generate_dataset, Manifest, OcclusionMode, Sample, SceneSpec, Split};
use crate::train::{
    ablation_csv, evaluate, format_table, fusion_grid, kernel_grid, run_ablation, train,
    AblationKind, TrainConfig, DEFAULT_KERNELS,
};

pub const DATA_DIR_ENV: &str = "FORKFUSE_DATA_DIR";
pub const RUN_MANIFEST: &str = "run_manifest.txt";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitSel {
    Train,
    Test,
    All,
}

impl SplitSel {
    fn as_split(self) -> Option<Split> {
        match self {
            Self::Train => Some(Split::Train),
            Self::Test => Some(Split::Test),
            Self::All => None,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Test => "test",
            Self::All => "all",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub scenes: usize,
    pub dir: Option<PathBuf>,
    /// Split used for training.
    pub split: SplitSel,
    pub scene: SceneSpec,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            scenes: 20,
            dir: None,
            split: SplitSel::Train,
            scene: SceneSpec::default(),
        }
    }
}

/// Resolved configuration of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::desk(),
            train: TrainConfig::desk(),
            data: DataConfig::default(),
        }
    }
}

impl RunConfig {
    /// Applies `section.key = value` lines over the defaults. `run.` lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        cfg.model.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (section, k) = key
            .split_once('.')
            .ok_or_else(|| Error::Config(format!("key {key:?} lacks a section prefix")))?;
        match (section, k) {
            ("run", _) => Ok(()),
            ("model", k) => self.model.set(k, value),
            ("train", k) => self.train.set(k, value),
            ("data", "scenes") => {
                self.data.scenes = value
                    .parse()
                    .map_err(|_| Error::Config(format!("data.scenes: cannot parse {value:?}")))?;
                Ok(())
            }
            ("data", "dir") => {
                self.data.dir = Some(PathBuf::from(value));
                Ok(())
            }
            ("data", "split") => {
                self.data.split = SplitSel::from_str(value, true)
                    .map_err(|_| Error::Config(format!("data.split: {value:?} is not train, test or all")))?;
                Ok(())
            }
            ("data", k) => self.data.scene.set(k, value),
            _ => Err(Error::Config(format!("unknown section in {key:?}"))),
        }
    }

    /// Every resolved value, in config-file syntax.
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        for (prefix, kv) in [
            ("model", self.model.to_kv()),
            ("train", self.train.to_kv()),
            ("data", self.data.scene.to_kv()),
        ] {
            for line in kv.lines() {
                let _ = writeln!(out, "{prefix}.{line}");
            }
        }
        let _ = writeln!(out, "data.scenes = {}", self.data.scenes);
        let _ = writeln!(out, "data.split = {}", self.data.split.as_str());
        if let Some(d) = &self.data.dir {
            let _ = writeln!(out, "data.dir = {}", d.display());
        }
        out
    }
}

/// Provenance record written before any result.
#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub snapshot: String,
    pub seed: u64,
    pub threads: usize,
    /// SHA-256 over the command, the snapshot and every input file.
    pub input_hash: String,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str, config_path: Option<&Path>, snapshot: String, seed: u64, threads: usize) -> Self {
        Self {
            command: command.into(),
            config_path: config_path.map(Path::to_path_buf),
            snapshot,
            seed,
            threads,
            input_hash: String::new(),
            outputs: Vec::new(),
        }
    }

    /// Hashes the command line state plus the given input blobs.
    pub fn seal(&mut self, inputs: &[&[u8]]) {
        let mut h = Sha256::new();
        h.update(self.command.as_bytes());
        h.update(self.seed.to_le_bytes());
        h.update(self.snapshot.as_bytes());
        for blob in inputs {
            h.update((blob.len() as u64).to_le_bytes());
            h.update(blob);
        }
        self.input_hash = hex::encode(h.finalize());
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "run.command = {}", self.command);
        let cfg = self.config_path.as_ref().map_or("-".into(), |p| p.display().to_string());
        let _ = writeln!(out, "run.config = {cfg}");
        let _ = writeln!(out, "run.seed = {}", self.seed);
        let _ = writeln!(out, "run.threads = {}", self.threads);
        let _ = writeln!(out, "run.input_hash = {}", self.input_hash);
        for o in &self.outputs {
            let _ = writeln!(out, "run.output = {}", o.display());
        }
        out.push_str(&self.snapshot);
        out
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(RUN_MANIFEST);
        std::fs::write(&path, self.to_text()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

#[derive(Debug, Parser)]
#[command(name = "forkfuse", version, about = "Radar/Lidar fusion detector: data, training, evaluation")]
pub struct Cli {
    /// Seed for every random choice of the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (recorded in the run manifest).
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// Output directory.
    #[arg(long, global = true, default_value = "forkfuse-out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Config file of `model.`, `train.` and `data.` keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset directory; defaults to `data.dir`, then $FORKFUSE_DATA_DIR.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic paired radar/Lidar dataset under --out.
    Synth {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        scenes: Option<usize>,
        #[arg(long)]
        occlusion: Option<String>,
        #[arg(long)]
        occlusion_fraction: Option<f64>,
    },
    /// Rasterize a binary point cloud into a bird's-eye-view image (.png or .ffck).
    Rasterize {
        cloud: PathBuf,
        output: PathBuf,
        /// Grid side in cells.
        #[arg(long, default_value_t = 576)]
        cells: usize,
        /// Double the grid by nearest-neighbour upsampling.
        #[arg(long)]
        upsample: bool,
    },
    /// Train a detector; writes checkpoint.ffck and loss.csv.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_parser = ["early", "mid", "late"])]
        fusion: Option<String>,
        #[arg(long)]
        radar_only: bool,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Evaluate a checkpoint: AP@0.5 summary and PR-curve CSV.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value_t = SplitSel::All)]
        split: SplitSel,
    },
    /// Train and score a grid of variants over several seeds; writes ablation.csv.
    Ablate {
        #[arg(long, value_parser = ["fusion_mode", "kernel_size"])]
        kind: String,
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        data: DataArgs,
        /// Seeds per variant, counting up from --seed.
        #[arg(long, default_value_t = 3)]
        runs: u64,
        /// Depth-wise kernel sizes for the kernel_size grid.
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_KERNELS)]
        kernels: Vec<usize>,
        /// Leave the radar-only baseline out of the fusion grid.
        #[arg(long)]
        no_baseline: bool,
    },
    /// Run the finite-difference gradient suite over every differentiable operator.
    Gradcheck {
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_INSTANCES)]
        instances: usize,
    },
}

/// Exit status for an error: 1 for invalid input or configuration, 2 for runtime failures.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Input(_) | Error::Parse { .. } | Error::Format { .. } => 1,
        _ => 2,
    }
}

/// Parses `argv` (program name first), runs the command and returns the exit status.
pub fn run_cli<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads.max(1)).build_global();
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig> {
    match &args.config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn data_dir(flag: &Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf> {
    let dir = flag
        .clone()
        .or_else(|| cfg.data.dir.clone())
        .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
        .ok_or_else(|| Error::Input(format!("no dataset given: pass --data, set data.dir or ${DATA_DIR_ENV}")))?;
    if !dir.join("manifest.txt").is_file() {
        return Err(Error::Input(format!("{} is not a dataset directory (no manifest.txt)", dir.display())));
    }
    Ok(dir)
}

fn read_input(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))
}

fn execute(cli: &Cli) -> Result<i32> {
    let out = &cli.out;
    match &cli.command {
        Command::Synth { config, scenes, occlusion, occlusion_fraction } => {
            let mut cfg = load_config(config)?;
            if let Some(n) = scenes {
                cfg.data.scenes = *n;
            }
            if let Some(m) = occlusion {
                cfg.data.scene.occlusion_mode = m.parse::<OcclusionMode>()?;
            }
            if let Some(f) = occlusion_fraction {
                cfg.data.scene.occlusion_fraction = *f;
            }
            if let Some(s) = cli.seed {
                cfg.data.scene.seed = s;
            }
            cfg.data.scene.validate()?;
            let mut m = RunManifest::new("synth", config.config.as_deref(), cfg.snapshot(), cfg.data.scene.seed, cli.threads);
            m.seal(&[]);
            m.outputs.push(out.join("manifest.txt"));
            m.write(out)?;
            let manifest = generate_dataset(cfg.data.scenes, &cfg.data.scene, out)?;
            let n_train = manifest.split(Split::Train).count();
            println!(
                "wrote {} scenes ({} train, {} test) to {}",
                manifest.entries.len(),
                n_train,
                manifest.entries.len() - n_train,
                out.display()
            );
            println!("dataset hash {}", manifest.hash());
        }
        Command::Rasterize { cloud, output, cells, upsample } => {
            if *cells == 0 {
                return Err(Error::Config("--cells must be positive".into()));
            }
            let bev = BevConfig {
                cells: *cells,
                meters_per_cell: 2.0 * BevConfig::paper().half_extent / *cells as f64,
                ..BevConfig::paper()
            };
            let bytes = read_input(cloud)?;
            let snapshot = format!("bev.cells = {cells}\nbev.upsample = {upsample}\n");
            let mut m = RunManifest::new("rasterize", None, snapshot, cli.seed.unwrap_or(0), cli.threads);
            m.seal(&[&bytes]);
            m.outputs.push(output.clone());
            m.write(out)?;
            let pc = load_pointcloud(cloud)?;
            let mut img = rasterize_bev(&pc, &bev);
            if *upsample {
                img = upsample_bev(&img)?;
            }
            if output.extension().is_some_and(|e| e == "png") {
                export_png(&img.grid, output)?;
            } else {
                checkpoint::save(output, &[("bev".to_string(), img.grid.clone())])?;
            }
            println!("rasterized {} points into {}x{} -> {}", pc.points.len(), img.side(), img.side(), output.display());
        }
        Command::Train { config, data, fusion, radar_only, iterations } => {
            let mut cfg = load_config(config)?;
            if let Some(f) = fusion {
                cfg.model.fusion_mode = f.parse::<FusionMode>()?;
            }
            if *radar_only {
                cfg.model.radar_only = true;
            }
            if let Some(n) = iterations {
                cfg.train.iterations = *n;
            }
            if let Some(s) = cli.seed {
                cfg.train.seed = s;
            }
            cfg.model.validate()?;
            cfg.train.validate()?;
            let dir = data_dir(&data.data, &cfg)?;
            let manifest = Manifest::load(&dir)?;
            let mut m = RunManifest::new("train", config.config.as_deref(), cfg.snapshot(), cfg.train.seed, cli.threads);
            m.seal(&[manifest.to_text().as_bytes()]);
            let ckpt = out.join("checkpoint.ffck");
            let loss_path = out.join("loss.csv");
            m.outputs.extend([ckpt.clone(), loss_path.clone()]);
            m.write(out)?;

            let samples = manifest.load_samples(cfg.data.split.as_split())?;
            check_sample_size(&samples, &cfg.model)?;
            let mut model = Detector::<f32>::new(cfg.model.clone(), cfg.train.seed)?;
            println!(
                "training {} parameters on {} scenes for {} iterations",
                model.parameter_count(),
                samples.len(),
                cfg.train.iterations
            );
            let every = (cfg.train.iterations / 20).max(1);
            let result = train(&mut model, &samples, &cfg.train, |r| {
                if r.iter % every == 0 || r.iter + 1 == cfg.train.iterations {
                    println!("iter {:>6}  loss {:.4}  cls {:.4}  reg {:.4}  lr {}", r.iter, r.total, r.cls, r.reg, r.lr);
                }
            });
            // the restored last-good model is still worth keeping after a divergence
            model.save(&ckpt)?;
            let log = result?;
            std::fs::write(&loss_path, log.to_csv()).map_err(|e| Error::io(&loss_path, e))?;
            let ap = evaluate(&model, &samples, &model.detect_config())?;
            println!("AP@0.5 on the training scenes = {:.4}", ap.ap50);
            println!("checkpoint {}", ckpt.display());
        }
        Command::Eval { checkpoint, data, split } => {
            let cfg = RunConfig::default();
            let dir = data_dir(&data.data, &cfg)?;
            let manifest = Manifest::load(&dir)?;
            let ckpt_bytes = read_input(checkpoint)?;
            let snapshot = format!("eval.checkpoint = {}\neval.data = {}\neval.split = {}\n", checkpoint.display(), dir.display(), split.as_str());
            let mut m = RunManifest::new("eval", None, snapshot, cli.seed.unwrap_or(0), cli.threads);
            m.seal(&[&ckpt_bytes, manifest.to_text().as_bytes()]);
            let curve_path = out.join("pr_curve.csv");
            let report_path = out.join("eval.txt");
            m.outputs.extend([report_path.clone(), curve_path.clone()]);
            m.write(out)?;

            let model = Detector::<f32>::load(checkpoint)?;
            let samples = manifest.load_samples(split.as_split())?;
            check_sample_size(&samples, &model.cfg)?;
            let r = evaluate(&model, &samples, &model.detect_config())?;
            std::fs::write(&curve_path, r.curve_csv()).map_err(|e| Error::io(&curve_path, e))?;
            std::fs::write(&report_path, r.summary()).map_err(|e| Error::io(&report_path, e))?;
            print!("{}", r.summary());
        }
        Command::Ablate { kind, config, data, runs, kernels, no_baseline } => {
            let mut cfg = load_config(config)?;
            if let Some(s) = cli.seed {
                cfg.train.seed = s;
            }
            let kind: AblationKind = kind.parse()?;
            let grid = match kind {
                AblationKind::FusionMode => fusion_grid(&cfg.model, !no_baseline),
                AblationKind::KernelSize => kernel_grid(&cfg.model, kernels),
            };
            for v in &grid {
                v.model.validate()?;
            }
            if *runs == 0 {
                return Err(Error::Config("--runs must be at least 1".into()));
            }
            let seeds: Vec<u64> = (0..*runs).map(|k| cfg.train.seed + k).collect();
            let dir = data_dir(&data.data, &cfg)?;
            let manifest = Manifest::load(&dir)?;
            let mut m = RunManifest::new("ablate", config.config.as_deref(), cfg.snapshot(), cfg.train.seed, cli.threads);
            let grid_text: String = grid.iter().map(|v| format!("{}\n", v.name)).collect();
            m.seal(&[manifest.to_text().as_bytes(), grid_text.as_bytes()]);
            let csv_path = out.join("ablation.csv");
            m.outputs.push(csv_path.clone());
            m.write(out)?;

            let train_set = manifest.load_samples(Some(Split::Train))?;
            let test_set = manifest.load_samples(Some(Split::Test))?;
            check_sample_size(&train_set, &cfg.model)?;
            let rows = run_ablation(&grid, &seeds, &train_set, &test_set, &cfg.train, |r| {
                println!("{:<12} seed {:<4} AP@0.5 {:.4}", r.variant, r.seed, r.ap50);
            })?;
            std::fs::write(&csv_path, ablation_csv(&rows)).map_err(|e| Error::io(&csv_path, e))?;
            print!("{}", format_table(&rows));
        }
        Command::Gradcheck { tol, instances } => {
            let seed = cli.seed.unwrap_or(0);
            let snapshot = format!("gradcheck.tol = {tol}\ngradcheck.instances = {instances}\n");
            let mut m = RunManifest::new("gradcheck", None, snapshot, seed, cli.threads);
            m.seal(&[]);
            let report_path = out.join("gradcheck.txt");
            m.outputs.push(report_path.clone());
            m.write(out)?;
            let report = run_gradient_suite(*tol, *instances, seed)?;
            let text = report.to_string();
            std::fs::write(&report_path, format!("{text}\n")).map_err(|e| Error::io(&report_path, e))?;
            println!("{text}");
            if !report.passed() {
                return Ok(2);
            }
        }
    }
    Ok(0)
}

fn check_sample_size(samples: &[Sample], model: &ModelConfig) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Input("the selected split holds no scenes".into()));
    }
    let s = samples[0].radar.shape();
    if (s[1], s[2]) != model.input_hw {
        return Err(Error::Input(format!(
            "scenes are {}x{} but the model expects {}x{}",
            s[1], s[2], model.input_hw.0, model.input_hw.1
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_sections_and_precedence() {
        let cfg = RunConfig::parse("# desk run\nmodel.fusion_mode = late\ntrain.iterations = 7\ndata.occlusion_mode = radar_blind\ndata.scenes = 5\n").unwrap();
        assert_eq!(cfg.model.fusion_mode, FusionMode::Late);
        assert_eq!(cfg.train.iterations, 7);
        assert_eq!(cfg.data.scene.occlusion_mode, OcclusionMode::RadarBlind);
        assert_eq!(cfg.data.scenes, 5);
        assert_eq!(cfg.model.input_hw, ModelConfig::desk().input_hw);
        assert!(RunConfig::parse("iterations = 7").is_err());
        assert!(RunConfig::parse("optim.lr = 1").is_err());
    }

    #[test]
    fn manifest_replays_as_config() {
        let mut cfg = RunConfig::default();
        cfg.train.seed = 5;
        cfg.data.split = SplitSel::All;
        let mut m = RunManifest::new("train", None, cfg.snapshot(), 5, 1);
        m.seal(&[b"abc"]);
        assert_eq!(m.input_hash.len(), 64);
        assert_eq!(RunConfig::parse(&m.to_text()).unwrap(), cfg);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run_cli(["forkfuse", "--bogus"]), 1);
        assert_eq!(run_cli(["forkfuse", "--help"]), 0);
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(run_cli(["forkfuse", "--out", out, "train", "--config", "missing.cfg"]), 1);
        assert_eq!(exit_code(&Error::Diverged { iteration: 3, loss: f64::NAN }), 2);
    }
}
