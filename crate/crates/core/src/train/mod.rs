//! SGD training, paired augmentation, AP@0.5 evaluation and ablation runners.

mod ablation;
mod augment;
mod config;
mod eval;
mod sgd;
mod trainer;

pub use ablation::{
    ablation_csv, format_table, fusion_grid, kernel_grid, mean_by_variant, run_ablation,
    AblationKind, AblationRow, Variant, DEFAULT_KERNELS,
};
pub use augment::{augment_pair, draw_transform, PairTransform, MIN_VISIBLE_FRACTION};
pub use config::{AugmentConfig, TrainConfig};
pub use eval::{average_precision, interpolated_ap, EvalResult, PrPoint};
pub use sgd::Sgd;
pub use trainer::{detect_all, evaluate, train, LossRecord, TrainLog};
