use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::nn::{Scalar, Tensor};

use super::anchors::AnchorSet;
use super::boxes::{decode, iou_aabb, AxisBox};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub bbox: AxisBox,
    /// Sigmoid objectness in (0, 1).
    pub score: f64,
}

impl Detection {
    /// The only class the head predicts.
    pub const CLASS: &'static str = "vehicle";
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectConfig {
    pub image_hw: (usize, usize),
    pub min_size: f64,
    pub pre_nms_k: usize,
    pub nms_iou: f64,
    pub post_nms_k: usize,
    pub score_threshold: f64,
}

impl DetectConfig {
    pub fn desk(image_hw: (usize, usize)) -> Self {
        Self {
            image_hw,
            min_size: 1.0,
            pre_nms_k: 1000,
            nms_iou: 0.7,
            post_nms_k: 100,
            score_threshold: 0.5,
        }
    }

    pub fn paper(image_hw: (usize, usize)) -> Self {
        Self {
            pre_nms_k: 12_000,
            ..Self::desk(image_hw)
        }
    }
}

/// Greedy suppression. Candidates are visited by descending score, ties by ascending index;
/// returns the kept positions into `boxes`.
pub fn nms(boxes: &[AxisBox], scores: &[f64], iou_threshold: f64, limit: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut keep: Vec<usize> = Vec::new();
    for i in order {
        if keep.len() >= limit {
            break;
        }
        if keep.iter().all(|&k| iou_aabb(&boxes[k], &boxes[i]) <= iou_threshold) {
            keep.push(i);
        }
    }
    keep
}

/// Turns one image's head outputs (`A×h×w` logits, `4A×h×w` deltas) into detections.
pub fn decode_and_nms<T: Scalar>(
    logits: &Tensor<T>,
    deltas: &Tensor<T>,
    anchors: &AnchorSet,
    cfg: &DetectConfig,
) -> Result<Vec<Detection>> {
    let a = anchors.per_cell();
    let hw = anchors.cells();
    if logits.numel() != a * hw || deltas.numel() != 4 * a * hw {
        return Err(Error::config(format!(
            "head outputs {:?}/{:?} do not match {} anchors",
            logits.shape(),
            deltas.shape(),
            anchors.len()
        )));
    }
    let (ih, iw) = (cfg.image_hw.0 as f64, cfg.image_hw.1 as f64);
    let mut cands: Vec<(usize, f64, AxisBox)> = Vec::new();
    for (j, anchor) in anchors.boxes.iter().enumerate() {
        let (cell, ch) = (j / a, j % a);
        let z = logits.data()[ch * hw + cell].as_f64();
        let score = 1.0 / (1.0 + (-z).exp());
        let d = [0, 1, 2, 3].map(|k| deltas.data()[(4 * ch + k) * hw + cell].as_f64());
        let b = decode(d, anchor).clip(iw, ih);
        if b.width() >= cfg.min_size && b.height() >= cfg.min_size && score.is_finite() {
            cands.push((j, score, b));
        }
    }
    cands.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    cands.truncate(cfg.pre_nms_k);
    let boxes: Vec<AxisBox> = cands.iter().map(|c| c.2).collect();
    let scores: Vec<f64> = cands.iter().map(|c| c.1).collect();
    Ok(nms(&boxes, &scores, cfg.nms_iou, cfg.post_nms_k)
        .into_iter()
        .filter(|&i| scores[i] >= cfg.score_threshold)
        .map(|i| Detection {
            bbox: boxes[i],
            score: scores[i],
        })
        .collect())
}

/// One line per detection: `frame_id x1 y1 x2 y2 score`.
pub fn format_detections(frame_id: &str, dets: &[Detection]) -> String {
    let mut out = String::new();
    for d in dets {
        let b = d.bbox;
        let _ = writeln!(out, "{frame_id} {} {} {} {} {}", b.x1, b.y1, b.x2, b.y2, d.score);
    }
    out
}

pub fn parse_detections(text: &str) -> Result<Vec<(String, Detection)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: &str| Error::Parse {
            context: "detections".into(),
            record: format!("line {}", n + 1),
            message: m.into(),
        };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 6 {
            return Err(bad("expected `frame_id x1 y1 x2 y2 score`"));
        }
        let v: Vec<f64> = f[1..]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| bad(&format!("bad number {s:?}"))))
            .collect::<Result<_>>()?;
        out.push((
            f[0].to_string(),
            Detection {
                bbox: AxisBox {
                    x1: v[0],
                    y1: v[1],
                    x2: v[2],
                    y2: v[3],
                },
                score: v[4],
            },
        ));
    }
    Ok(out)
}
