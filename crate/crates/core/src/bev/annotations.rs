use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::head::AxisBox;

/// Rotated rectangle in radar-frame pixels; `(cx, cy)` is the center, `angle` in degrees.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrientedBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub angle: f64,
}

/// Classes kept as "vehicle".
pub const VEHICLE_CLASSES: &[&str] = &["car", "van", "truck", "bus", "motorbike", "vehicle"];

pub fn normalize_angle(deg: f64) -> f64 {
    let a = deg.rem_euclid(360.0);
    if a >= 360.0 {
        0.0
    } else {
        a
    }
}

/// Corners of the rectangle rotated by `angle` about its center.
pub fn obb_corners(b: &OrientedBox) -> [(f64, f64); 4] {
    let (s, c) = b.angle.to_radians().sin_cos();
    let (hw, hh) = (b.w / 2.0, b.h / 2.0);
    [(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)]
        .map(|(dx, dy)| (b.cx + dx * c - dy * s, b.cy + dx * s + dy * c))
}

/// Smallest axis-aligned box containing the rotated rectangle.
pub fn obb_to_aabb(b: &OrientedBox) -> AxisBox {
    let pts = obb_corners(b);
    let fold = |f: fn(f64, f64) -> f64, init: f64, k: usize| {
        pts.iter().map(|p| if k == 0 { p.0 } else { p.1 }).fold(init, f)
    };
    AxisBox {
        x1: fold(f64::min, f64::INFINITY, 0),
        y1: fold(f64::min, f64::INFINITY, 1),
        x2: fold(f64::max, f64::NEG_INFINITY, 0),
        y2: fold(f64::max, f64::NEG_INFINITY, 1),
    }
}

/// Parses `frame class x y w h angle` records, keeping vehicles only.
pub fn parse_annotations(text: &str, context: &str) -> Result<Vec<(String, OrientedBox)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let bad = |m: String| Error::Parse {
            context: context.to_string(),
            record: format!("line {} ({line:?})", n + 1),
            message: m,
        };
        if f.len() != 7 {
            return Err(bad(format!(
                "expected 7 fields `frame class x y w h angle`, found {}",
                f.len()
            )));
        }
        let num = |i: usize, name: &str| -> Result<f64> {
            let v: f64 = f[i].parse().map_err(|_| bad(format!("{name} {:?} is not a number", f[i])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad(format!("{name} is not finite")))
            }
        };
        let b = OrientedBox {
            cx: num(2, "x")?,
            cy: num(3, "y")?,
            w: num(4, "w")?,
            h: num(5, "h")?,
            angle: normalize_angle(num(6, "angle")?),
        };
        if b.w <= 0.0 || b.h <= 0.0 {
            return Err(bad("w and h must be positive".into()));
        }
        if VEHICLE_CLASSES.contains(&f[1].to_ascii_lowercase().as_str()) {
            out.push((f[0].to_string(), b));
        }
    }
    Ok(out)
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<(String, OrientedBox)>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&text, &path.display().to_string())
}

pub fn format_annotations<'a>(records: impl IntoIterator<Item = (&'a str, &'a OrientedBox)>) -> String {
    let mut out = String::new();
    for (frame, b) in records {
        let _ = writeln!(out, "{frame} car {} {} {} {} {}", b.cx, b.cy, b.w, b.h, b.angle);
    }
    out
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn records_and_filtering() {
        let text = "0 car 100 100 20 10 0\n0 pedestrian 5 5 2 2 0\n1 bus 50 60 30 12 360\n";
        let got = parse_annotations(text, "t").unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].1, OrientedBox { cx: 100.0, cy: 100.0, w: 20.0, h: 10.0, angle: 0.0 });
        assert_eq!(got[1].1.angle, 0.0);
        match parse_annotations("3 car 1 2 3 4", "ann.txt") {
            Err(Error::Parse { record, .. }) => assert!(record.contains("line 1")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn enclosing_boxes() {
        let b = OrientedBox { cx: 50.0, cy: 40.0, w: 20.0, h: 10.0, angle: 0.0 };
        assert_eq!(obb_to_aabb(&b), AxisBox::new(40.0, 35.0, 60.0, 45.0).unwrap());
        let r = obb_to_aabb(&OrientedBox { angle: 90.0, ..b });
        assert!((r.width() - 10.0).abs() < 1e-9 && (r.height() - 20.0).abs() < 1e-9);
        let d = obb_to_aabb(&OrientedBox { cx: 0.0, cy: 0.0, w: 10.0, h: 10.0, angle: 45.0 });
        assert!((d.width() - 10.0 * 2f64.sqrt()).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn aabb_contains_corners(cx in -100.0..100.0f64, cy in -100.0..100.0f64,
                                 w in 0.5..60.0f64, h in 0.5..60.0f64, angle in -720.0..720.0f64) {
            let b = OrientedBox { cx, cy, w, h, angle };
            let a = obb_to_aabb(&b);
            for (x, y) in obb_corners(&b) {
                prop_assert!(x >= a.x1 - 1e-9 && x <= a.x2 + 1e-9 && y >= a.y1 - 1e-9 && y <= a.y2 + 1e-9);
            }
            prop_assert!(a.area() >= w * h * (1.0 - 1e-12));
            let n = normalize_angle(angle);
            prop_assert!((0.0..360.0).contains(&n));
        }
    }
}
