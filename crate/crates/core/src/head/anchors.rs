use crate::error::{Error, Result};

use super::boxes::AxisBox;

/// Anchor grid. Box `j` sits at cell `(y, x)` with scale `s` and ratio `r`, where
/// `j = ((y·W + x)·S + s)·R + r`.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorSet {
    pub stride: usize,
    pub feature_hw: (usize, usize),
    pub scales: Vec<f64>,
    pub ratios: Vec<f64>,
    pub boxes: Vec<AxisBox>,
}

impl AnchorSet {
    pub fn per_cell(&self) -> usize {
        self.scales.len() * self.ratios.len()
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn cells(&self) -> usize {
        self.feature_hw.0 * self.feature_hw.1
    }

    pub fn index(&self, y: usize, x: usize, scale: usize, ratio: usize) -> usize {
        ((y * self.feature_hw.1 + x) * self.scales.len() + scale) * self.ratios.len() + ratio
    }

    /// `(y, x, a)` where `a = s·R + r` is the anchor's channel in the head outputs.
    pub fn locate(&self, j: usize) -> (usize, usize, usize) {
        let a = j % self.per_cell();
        let cell = j / self.per_cell();
        (cell / self.feature_hw.1, cell % self.feature_hw.1, a)
    }
}

/// Tiles `scales × ratios` anchors on every feature cell, centered at `(i + 0.5)·stride`.
/// A ratio `r` gives width `s·√r` and height `s/√r`.
pub fn generate_anchors(
    feature_hw: (usize, usize),
    stride: usize,
    scales: &[f64],
    ratios: &[f64],
) -> Result<AnchorSet> {
    if scales.is_empty() || ratios.is_empty() {
        return Err(Error::config("anchor scales and ratios must be nonempty"));
    }
    if scales.iter().chain(ratios).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::config("anchor scales and ratios must be positive"));
    }
    let (fh, fw) = feature_hw;
    let st = stride as f64;
    let mut boxes = Vec::with_capacity(fh * fw * scales.len() * ratios.len());
    for y in 0..fh {
        for x in 0..fw {
            let (cx, cy) = ((x as f64 + 0.5) * st, (y as f64 + 0.5) * st);
            for &s in scales {
                for &r in ratios {
                    let q = r.sqrt();
                    boxes.push(AxisBox::from_center(cx, cy, s * q, s / q));
                }
            }
        }
    }
    Ok(AnchorSet {
        stride,
        feature_hw,
        scales: scales.to_vec(),
        ratios: ratios.to_vec(),
        boxes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_layout() {
        let set = generate_anchors((72, 72), 16, &[32.0, 64.0, 128.0], &[0.5, 1.0, 2.0]).unwrap();
        assert_eq!(set.len(), 46_656);
        let j = set.index(3, 5, 2, 1);
        assert_eq!(set.locate(j), (3, 5, 7));
        let b = set.boxes[j];
        assert_eq!(b.center(), (88.0, 56.0));
        assert_eq!(b.width(), 128.0);
    }

    #[test]
    fn single_cell_and_area_preserving_ratio() {
        let one = generate_anchors((1, 1), 16, &[32.0], &[1.0]).unwrap();
        assert_eq!(one.boxes, vec![AxisBox::new(-8.0, -8.0, 24.0, 24.0).unwrap()]);
        let wide = generate_anchors((1, 1), 16, &[32.0], &[2.0]).unwrap().boxes[0];
        assert!((wide.width() - 32.0 * 2f64.sqrt()).abs() < 1e-12);
        assert!((wide.height() - 32.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!((wide.area() - 1024.0).abs() < 1e-9);
        assert!(generate_anchors((1, 1), 16, &[], &[1.0]).is_err());
    }
}
