use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::backbone::{FusionMode, ModelConfig};
use crate::error::{Error, Result};
use crate::head::DetectConfig;
use crate::model::Detector;
use crate::synth::Sample;

use super::config::TrainConfig;
use super::trainer::{evaluate, train};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AblationKind {
    FusionMode,
    KernelSize,
}

impl std::str::FromStr for AblationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fusion_mode" => Ok(Self::FusionMode),
            "kernel_size" => Ok(Self::KernelSize),
            _ => Err(Error::Config(format!("unknown ablation kind {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variant {
    pub name: String,
    pub model: ModelConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub variant: String,
    pub seed: u64,
    pub ap50: f64,
}

/// Early, mid and late fusion, optionally preceded by a radar-only baseline.
pub fn fusion_grid(base: &ModelConfig, with_radar_only: bool) -> Vec<Variant> {
    let mut out = Vec::new();
    if with_radar_only {
        out.push(Variant {
            name: "radar_only".into(),
            model: ModelConfig {
                radar_only: true,
                ..base.clone()
            },
        });
    }
    for mode in [FusionMode::Early, FusionMode::Mid, FusionMode::Late] {
        out.push(Variant {
            name: mode.to_string(),
            model: ModelConfig {
                fusion_mode: mode,
                radar_only: false,
                ..base.clone()
            },
        });
    }
    out
}

pub const DEFAULT_KERNELS: [usize; 4] = [3, 5, 7, 11];

pub fn kernel_grid(base: &ModelConfig, kernels: &[usize]) -> Vec<Variant> {
    kernels
        .iter()
        .map(|&k| Variant {
            name: format!("k{k}"),
            model: ModelConfig {
                dw_kernel: k,
                ..base.clone()
            },
        })
        .collect()
}

/// Trains one model per (variant, seed) on `train_set` and scores AP@0.5 on `test_set`.
pub fn run_ablation(
    grid: &[Variant],
    seeds: &[u64],
    train_set: &[Sample],
    test_set: &[Sample],
    train_cfg: &TrainConfig,
    mut on_row: impl FnMut(&AblationRow),
) -> Result<Vec<AblationRow>> {
    if grid.is_empty() || seeds.is_empty() {
        return Err(Error::config("ablation grid and seed list must be nonempty"));
    }
    let mut rows = Vec::new();
    for v in grid {
        for &seed in seeds {
            let mut model = Detector::<f32>::new(v.model.clone(), seed)?;
            let cfg = TrainConfig {
                seed,
                ..train_cfg.clone()
            };
            train(&mut model, train_set, &cfg, |_| {})?;
            let det = DetectConfig::desk(v.model.input_hw);
            let row = AblationRow {
                variant: v.name.clone(),
                seed,
                ap50: evaluate(&model, test_set, &det)?.ap50,
            };
            on_row(&row);
            rows.push(row);
        }
    }
    Ok(rows)
}

/// `variant,seed,ap50` rows.
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("variant,seed,ap50\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.variant, r.seed, r.ap50);
    }
    out
}

/// Mean AP per variant, in first-appearance order.
pub fn mean_by_variant(rows: &[AblationRow]) -> Vec<(String, f64)> {
    let mut sums: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    let mut order: Vec<&str> = Vec::new();
    for r in rows {
        let e = sums.entry(&r.variant).or_insert_with(|| {
            order.push(&r.variant);
            (0.0, 0)
        });
        e.0 += r.ap50;
        e.1 += 1;
    }
    order
        .into_iter()
        .map(|v| (v.to_string(), sums[v].0 / sums[v].1 as f64))
        .collect()
}

pub fn format_table(rows: &[AblationRow]) -> String {
    let mut out = format!("{:<12} {:>6} {:>8}\n", "variant", "runs", "mean AP");
    for (v, m) in mean_by_variant(rows) {
        let n = rows.iter().filter(|r| r.variant == v).count();
        let _ = writeln!(out, "{v:<12} {n:>6} {m:>8.4}");
    }
    out
}
