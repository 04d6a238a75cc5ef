//! Radar/Lidar fusion object detection on a small CPU autodiff core.
//!
//! The crate is organised bottom-up:
//!
//! * [`nn`]: tensors, the operator set and its reverse pass, checkpoints, gradient checks;
//! * [`backbone`]: the dual-branch feature extractor with additive-attention gates and the
//!   weight-shared dilated fork;
//! * [`head`]: anchors, target assignment, the region-proposal loss, decoding and NMS;
//! * [`bev`]: point-cloud loading, bird's-eye-view rasterization, annotations;
//! * [`synth`]: paired synthetic radar/Lidar scenes with known ground truth;
//! * [`train`]: SGD, augmentation, AP@0.5 evaluation and ablation runners;
//! * [`cli`]: the `forkfuse` command line.
//!
//! Runnable walkthroughs for each capability live in `examples/`.

pub mod error;
pub mod gradsuite;
pub mod backbone;
pub mod bev;
pub mod cli;
pub mod head;
pub mod model;
pub mod nn;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use model::Detector;
