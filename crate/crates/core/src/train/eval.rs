use std::fmt::Write as _;

use crate::head::{iou_aabb, AxisBox, Detection};

/// One point of the precision/recall sweep, after the detection at `score`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrPoint {
    pub score: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    /// COCO-style 101-point interpolated AP.
    pub ap50: f64,
    /// Area under the precision envelope at the observed recall steps.
    pub raw_ap: f64,
    pub curve: Vec<PrPoint>,
    pub num_gt: usize,
}

impl EvalResult {
    pub fn tp(&self) -> usize {
        self.curve.last().map_or(0, |p| p.tp)
    }

    pub fn fp(&self) -> usize {
        self.curve.last().map_or(0, |p| p.fp)
    }

    pub fn fn_(&self) -> usize {
        self.num_gt - self.tp()
    }

    /// `score,tp,fp,fn,precision,recall` rows.
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("score,tp,fp,fn,precision,recall\n");
        for p in &self.curve {
            let _ = writeln!(out, "{},{},{},{},{},{}", p.score, p.tp, p.fp, p.fn_, p.precision, p.recall);
        }
        out
    }

    pub fn summary(&self) -> String {
        format!(
            "AP@0.5 = {:.4}\nraw AP = {:.4}\nground truth = {}\nTP = {}  FP = {}  FN = {}\n",
            self.ap50,
            self.raw_ap,
            self.num_gt,
            self.tp(),
            self.fp(),
            self.fn_()
        )
    }
}

/// Best precision over curve points with recall ≥ r.
fn envelope(curve: &[PrPoint], r: f64) -> f64 {
    curve
        .iter()
        .filter(|p| p.recall >= r)
        .map(|p| p.precision)
        .fold(0.0, f64::max)
}

/// 101-point interpolation of a stored curve.
pub fn interpolated_ap(curve: &[PrPoint]) -> f64 {
    (0..=100).map(|i| envelope(curve, i as f64 / 100.0)).sum::<f64>() / 101.0
}

fn raw_envelope_ap(curve: &[PrPoint]) -> f64 {
    let mut ap = 0.0;
    let mut prev = 0.0;
    for p in curve {
        if p.recall > prev {
            ap += (p.recall - prev) * envelope(curve, p.recall);
            prev = p.recall;
        }
    }
    ap
}

/// AP at an IoU threshold over aligned per-frame detections and ground truth.
///
/// Detections are ranked by score (ties by frame, then position); each is matched to the
/// unmatched ground-truth box of its frame with the highest IoU at or above `iou_thresh`.
/// With no ground truth at all the AP is 0.
pub fn average_precision(dets: &[Vec<Detection>], gts: &[Vec<AxisBox>], iou_thresh: f64) -> EvalResult {
    assert_eq!(dets.len(), gts.len(), "detections and ground truth must cover the same frames");
    let num_gt: usize = gts.iter().map(Vec::len).sum();
    let mut order: Vec<(usize, usize)> = dets
        .iter()
        .enumerate()
        .flat_map(|(f, d)| (0..d.len()).map(move |k| (f, k)))
        .collect();
    order.sort_by(|a, b| {
        dets[b.0][b.1]
            .score
            .total_cmp(&dets[a.0][a.1].score)
            .then(a.cmp(b))
    });
    let mut matched: Vec<Vec<bool>> = gts.iter().map(|g| vec![false; g.len()]).collect();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut curve = Vec::with_capacity(order.len());
    for (f, k) in order {
        let d = &dets[f][k];
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts[f].iter().enumerate() {
            if matched[f][g] {
                continue;
            }
            let iou = iou_aabb(&d.bbox, gt);
            if iou >= iou_thresh && best.map_or(true, |(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        match best {
            Some((g, _)) => {
                matched[f][g] = true;
                tp += 1;
            }
            None => fp += 1,
        }
        curve.push(PrPoint {
            score: d.score,
            tp,
            fp,
            fn_: num_gt - tp,
            precision: tp as f64 / (tp + fp) as f64,
            recall: if num_gt == 0 { 0.0 } else { tp as f64 / num_gt as f64 },
        });
    }
    let (ap50, raw_ap) = if num_gt == 0 {
        (0.0, 0.0)
    } else {
        (interpolated_ap(&curve), raw_envelope_ap(&curve))
    };
    EvalResult {
        ap50,
        raw_ap,
        curve,
        num_gt,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(x: f64, score: f64) -> Detection {
        Detection {
            bbox: AxisBox::new(x, 0.0, x + 10.0, 10.0).unwrap(),
            score,
        }
    }

    #[test]
    fn trivial_cases() {
        let gt = vec![vec![AxisBox::new(0.0, 0.0, 10.0, 10.0).unwrap()]];
        assert_eq!(average_precision(&[vec![det(0.0, 0.9)]], &gt, 0.5).ap50, 1.0);
        assert_eq!(average_precision(&[vec![]], &gt, 0.5).ap50, 0.0);
        assert_eq!(average_precision(&[vec![det(0.0, 0.9)]], &[vec![]], 0.5).ap50, 0.0);
    }

    #[test]
    fn hit_miss_hit() {
        let gts = vec![vec![
            AxisBox::new(0.0, 0.0, 10.0, 10.0).unwrap(),
            AxisBox::new(100.0, 0.0, 110.0, 10.0).unwrap(),
        ]];
        let dets = vec![vec![det(0.0, 0.9), det(50.0, 0.8), det(100.0, 0.7)]];
        let r = average_precision(&dets, &gts, 0.5);
        // recall 0.5 at precision 1, recall 1 at precision 2/3
        let expect = (51.0 * 1.0 + 50.0 * (2.0 / 3.0)) / 101.0;
        assert!((r.ap50 - expect).abs() < 1e-12);
        assert!((r.raw_ap - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-12);
        assert_eq!((r.tp(), r.fp(), r.fn_()), (2, 1, 0));
        assert_eq!(interpolated_ap(&r.curve), r.ap50);
    }

    #[test]
    fn duplicate_detection_is_a_false_positive() {
        let gts = vec![vec![AxisBox::new(0.0, 0.0, 10.0, 10.0).unwrap()]];
        let r = average_precision(&[vec![det(0.0, 0.9), det(0.5, 0.8)]], &gts, 0.5);
        assert_eq!((r.tp(), r.fp()), (1, 1));
        assert_eq!(r.ap50, 1.0);
    }
}
