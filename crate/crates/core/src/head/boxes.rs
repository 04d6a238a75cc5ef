use crate::error::{Error, Result};

/// Upper bound on decoded log-size deltas, so `exp` cannot overflow.
pub const DELTA_CLAMP: f64 = 4.135_166_556_742_356; // ln(1000 / 16)

/// Axis-aligned box in input-image pixels, corners `(x1, y1)` to `(x2, y2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxisBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl AxisBox {
    /// Checked constructor: finite with positive extent.
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let b = Self { x1, y1, x2, y2 };
        b.validate()?;
        Ok(b)
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self {
            x1: cx - w / 2.0,
            y1: cy - h / 2.0,
            x2: cx + w / 2.0,
            y2: cy + h / 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x1, self.y1, self.x2, self.y2].iter().all(|v| v.is_finite());
        if !finite || self.x1 >= self.x2 || self.y1 >= self.y2 {
            return Err(Error::Input(format!("degenerate box {self:?}")));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn intersection(&self, other: &AxisBox) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn iou(&self, other: &AxisBox) -> f64 {
        iou_aabb(self, other)
    }

    /// Clamps to `[0, width] × [0, height]`.
    pub fn clip(&self, width: f64, height: f64) -> Self {
        Self {
            x1: self.x1.clamp(0.0, width),
            y1: self.y1.clamp(0.0, height),
            x2: self.x2.clamp(0.0, width),
            y2: self.y2.clamp(0.0, height),
        }
    }

    /// Mirror about the vertical axis of an image `width` pixels wide.
    pub fn hflip(&self, width: f64) -> Self {
        Self {
            x1: width - self.x2,
            y1: self.y1,
            x2: width - self.x1,
            y2: self.y2,
        }
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x1 && x <= self.x2 && y >= self.y1 && y <= self.y2
    }
}

/// Intersection over union; 0 when the union is empty.
pub fn iou_aabb(a: &AxisBox, b: &AxisBox) -> f64 {
    let inter = a.intersection(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Log-space regression target `(tx, ty, tw, th)` of `gt` relative to `anchor`.
pub fn encode(gt: &AxisBox, anchor: &AxisBox) -> [f64; 4] {
    let (gx, gy) = gt.center();
    let (ax, ay) = anchor.center();
    let (aw, ah) = (anchor.width(), anchor.height());
    [
        (gx - ax) / aw,
        (gy - ay) / ah,
        (gt.width() / aw).ln(),
        (gt.height() / ah).ln(),
    ]
}

/// Inverse of [`encode`]; size deltas are clamped at [`DELTA_CLAMP`].
pub fn decode(deltas: [f64; 4], anchor: &AxisBox) -> AxisBox {
    let (ax, ay) = anchor.center();
    let (aw, ah) = (anchor.width(), anchor.height());
    let cx = ax + deltas[0] * aw;
    let cy = ay + deltas[1] * ah;
    let w = aw * deltas[2].min(DELTA_CLAMP).exp();
    let h = ah * deltas[3].min(DELTA_CLAMP).exp();
    AxisBox::from_center(cx, cy, w, h)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn iou_examples() {
        let a = AxisBox::new(0.0, 0.0, 2.0, 2.0).unwrap();
        let b = AxisBox::new(1.0, 0.0, 3.0, 2.0).unwrap();
        assert_eq!(iou_aabb(&a, &a), 1.0);
        assert!((iou_aabb(&a, &b) - 1.0 / 3.0).abs() < 1e-15);
        let far = AxisBox::new(5.0, 5.0, 6.0, 6.0).unwrap();
        assert_eq!(iou_aabb(&a, &far), 0.0);
        assert!(AxisBox::new(1.0, 0.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn identity_deltas() {
        let a = AxisBox::new(4.0, 8.0, 36.0, 24.0).unwrap();
        assert_eq!(encode(&a, &a), [0.0; 4]);
        assert_eq!(decode([0.0; 4], &a), a);
    }

    #[test]
    fn flip_arithmetic() {
        let b = AxisBox::new(10.0, 20.0, 30.0, 40.0).unwrap();
        assert_eq!(b.hflip(100.0), AxisBox::new(70.0, 20.0, 90.0, 40.0).unwrap());
    }

    fn arb_box() -> impl Strategy<Value = AxisBox> {
        (-200.0..200.0f64, -200.0..200.0f64, 8.0..150.0f64, 8.0..150.0f64)
            .prop_map(|(x, y, w, h)| AxisBox::from_center(x, y, w, h))
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(gt in arb_box(), anchor in arb_box()) {
            let back = decode(encode(&gt, &anchor), &anchor);
            for (u, v) in [(back.x1, gt.x1), (back.y1, gt.y1), (back.x2, gt.x2), (back.y2, gt.y2)] {
                prop_assert!((u - v).abs() <= 1e-5, "{back:?} vs {gt:?}");
            }
        }

        #[test]
        fn iou_is_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let u = iou_aabb(&a, &b);
            prop_assert!((0.0..=1.0).contains(&u));
            prop_assert_eq!(u, iou_aabb(&b, &a));
        }
    }
}
