//! Single-class region-proposal head: anchors, target assignment, loss, decoding and NMS.

mod anchors;
mod boxes;
mod detect;
mod loss;
mod rpn;
mod targets;

pub use anchors::{generate_anchors, AnchorSet};
pub use boxes::{decode, encode, iou_aabb, AxisBox, DELTA_CLAMP};
pub use detect::{decode_and_nms, format_detections, nms, parse_detections, DetectConfig, Detection};
pub use loss::{log_loss, rpn_loss, rpn_loss_var, smooth_l1, RpnLoss, RpnLossGrads, DEFAULT_LAMBDA};
pub use rpn::RpnHead;
pub use targets::{assign_and_sample, AssignConfig, Label, RpnTargets};
