use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};

use super::anchors::AnchorSet;
use super::boxes::{encode, iou_aabb, AxisBox};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Label {
    Positive,
    Negative,
    Ignore,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AssignConfig {
    pub pos_iou: f64,
    pub neg_iou: f64,
    /// Largest share of the minibatch given to positives.
    pub pos_fraction: f64,
}

impl Default for AssignConfig {
    fn default() -> Self {
        Self {
            pos_iou: 0.7,
            neg_iou: 0.3,
            pos_fraction: 0.25,
        }
    }
}

/// Per-anchor training targets after sampling. Anchors left out of the minibatch are
/// `Ignore`.
#[derive(Clone, Debug, PartialEq)]
pub struct RpnTargets {
    pub labels: Vec<Label>,
    /// Regression target per anchor; meaningful for positives only, zero elsewhere.
    pub b_star: Vec<[f64; 4]>,
    /// Classification normalizer.
    pub minibatch: usize,
    /// Regression normalizer: number of feature cells.
    pub cells: usize,
}

impl RpnTargets {
    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// `p*` for sampled anchors.
    pub fn p_star(&self, j: usize) -> Option<f64> {
        match self.labels[j] {
            Label::Positive => Some(1.0),
            Label::Negative => Some(0.0),
            Label::Ignore => None,
        }
    }
}

/// Labels anchors by IoU against the ground truth (each GT's best anchors are always
/// positive) and samples a minibatch with at most `pos_fraction` positives.
pub fn assign_and_sample(
    anchors: &AnchorSet,
    gts: &[AxisBox],
    minibatch: usize,
    cfg: &AssignConfig,
    rng: &mut impl Rng,
) -> Result<RpnTargets> {
    if minibatch > anchors.len() {
        return Err(Error::config(format!(
            "minibatch {minibatch} exceeds anchor count {}",
            anchors.len()
        )));
    }
    for gt in gts {
        if gt.validate().is_err() || gt.area() <= 0.0 {
            return Err(Error::Input(format!("ground-truth box {gt:?} has zero area")));
        }
    }
    let n = anchors.len();
    let mut best_iou = vec![0.0f64; n];
    let mut best_gt = vec![usize::MAX; n];
    let mut gt_best = vec![0.0f64; gts.len()];
    for (j, a) in anchors.boxes.iter().enumerate() {
        for (k, gt) in gts.iter().enumerate() {
            let iou = iou_aabb(a, gt);
            if iou > best_iou[j] {
                best_iou[j] = iou;
                best_gt[j] = k;
            }
            if iou > gt_best[k] {
                gt_best[k] = iou;
            }
        }
    }

    let mut labels: Vec<Label> = best_iou
        .iter()
        .map(|&iou| {
            if iou >= cfg.pos_iou {
                Label::Positive
            } else if iou < cfg.neg_iou {
                Label::Negative
            } else {
                Label::Ignore
            }
        })
        .collect();
    // Every GT keeps its best-matching anchors, even below the positive threshold.
    for (j, a) in anchors.boxes.iter().enumerate() {
        for (k, gt) in gts.iter().enumerate() {
            if gt_best[k] > 0.0 && iou_aabb(a, gt) == gt_best[k] {
                labels[j] = Label::Positive;
            }
        }
    }

    let positives: Vec<usize> = (0..n).filter(|&j| labels[j] == Label::Positive).collect();
    let negatives: Vec<usize> = (0..n).filter(|&j| labels[j] == Label::Negative).collect();
    let max_pos = (minibatch as f64 * cfg.pos_fraction).floor() as usize;
    let keep_pos = subsample(&positives, max_pos, rng);
    let keep_neg = subsample(&negatives, minibatch - keep_pos.len(), rng);

    let mut sampled = vec![Label::Ignore; n];
    let mut b_star = vec![[0.0; 4]; n];
    for &j in &keep_pos {
        sampled[j] = Label::Positive;
        b_star[j] = encode(&gts[best_gt[j]], &anchors.boxes[j]);
    }
    for &j in &keep_neg {
        sampled[j] = Label::Negative;
    }
    labels = sampled;
    Ok(RpnTargets {
        labels,
        b_star,
        minibatch,
        cells: anchors.cells(),
    })
}

fn subsample(pool: &[usize], k: usize, rng: &mut impl Rng) -> Vec<usize> {
    if pool.len() <= k {
        return pool.to_vec();
    }
    let mut picked: Vec<usize> = sample(rng, pool.len(), k).into_iter().map(|i| pool[i]).collect();
    picked.sort_unstable();
    picked
}
