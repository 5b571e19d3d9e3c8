//! Box arithmetic shared by suppression, matching and evaluation.
//!
//! Boxes are closed regions; an intersection of zero width or height has zero area.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::BBox;

/// A dimensionless overlap ratio in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OverlapScore(f64);

impl OverlapScore {
    pub const ZERO: OverlapScore = OverlapScore(0.0);
    pub const ONE: OverlapScore = OverlapScore(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(Error::Config(format!("overlap score {value} outside [0, 1]")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    // Rounding can push a ratio of equal areas a hair past 1.
    fn clamped(value: f64) -> Self {
        Self(value.clamp(0.0, 1.0))
    }
}

/// A point in image coordinates, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(self, other: Point, t: f64) -> Point {
        Point::new(
            self.x + (other.x - self.x) * t,
            self.y + (other.y - self.y) * t,
        )
    }
}

pub fn intersection_area(a: &BBox, b: &BBox) -> f64 {
    let w = a.right().min(b.right()) - a.x.max(b.x);
    let h = a.bottom().min(b.bottom()) - a.y.max(b.y);
    if w <= 0.0 || h <= 0.0 {
        0.0
    } else {
        w * h
    }
}

/// Intersection over union.
pub fn iou(a: &BBox, b: &BBox) -> OverlapScore {
    let inter = intersection_area(a, b);
    if inter == 0.0 {
        return OverlapScore::ZERO;
    }
    OverlapScore::clamped(inter / (a.area() + b.area() - inter))
}

/// Intersection over the smaller of the two areas; 1 when one box contains the other.
///
/// Unlike IoU this stays high when a small tool box sits inside a large hand box.
pub fn overlap_over_min(a: &BBox, b: &BBox) -> OverlapScore {
    let inter = intersection_area(a, b);
    if inter == 0.0 {
        return OverlapScore::ZERO;
    }
    OverlapScore::clamped(inter / a.area().min(b.area()))
}

pub fn center(b: &BBox) -> Point {
    Point::new(b.x + b.w / 2.0, b.y + b.h / 2.0)
}

/// Width over height.
pub fn aspect_ratio(b: &BBox) -> f64 {
    b.w / b.h
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn iou_examples() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a).value(), 1.0);
        assert_eq!(iou(&a, &bb(20.0, 20.0, 5.0, 5.0)).value(), 0.0);
        // intersection 50, union 150
        assert!((iou(&a, &bb(5.0, 0.0, 10.0, 10.0)).value() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn touching_edges_do_not_overlap() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        let b = bb(10.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &b).value(), 0.0);
        assert_eq!(overlap_over_min(&a, &b).value(), 0.0);
    }

    #[test]
    fn overlap_over_min_examples() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        assert_eq!(overlap_over_min(&a, &bb(2.0, 2.0, 3.0, 3.0)).value(), 1.0);
        assert_eq!(overlap_over_min(&a, &bb(50.0, 0.0, 1.0, 1.0)).value(), 0.0);
        assert_eq!(overlap_over_min(&a, &bb(5.0, 0.0, 10.0, 10.0)).value(), 0.5);
    }

    #[test]
    fn center_and_aspect() {
        assert_eq!(center(&bb(0.0, 0.0, 10.0, 10.0)), Point::new(5.0, 5.0));
        assert_eq!(center(&bb(2.0, 4.0, 6.0, 8.0)), Point::new(5.0, 8.0));
        assert_eq!(aspect_ratio(&bb(3.0, 3.0, 7.0, 7.0)), 1.0);
        assert_eq!(aspect_ratio(&bb(0.0, 0.0, 20.0, 10.0)), 2.0);
        assert_eq!(aspect_ratio(&bb(0.0, 0.0, 10.0, 20.0)), 0.5);
    }

    #[test]
    fn overlap_score_range() {
        assert!(OverlapScore::new(1.2).is_err());
        assert!(OverlapScore::new(-0.1).is_err());
        assert_eq!(OverlapScore::new(0.5).unwrap().value(), 0.5);
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (0.0..200.0f64, 0.0..200.0f64, 1.0..100.0f64, 1.0..100.0f64)
            .prop_map(|(x, y, w, h)| bb(x, y, w, h))
    }

    proptest! {
        #[test]
        fn scores_symmetric_and_ordered(a in arb_box(), b in arb_box()) {
            let i = iou(&a, &b).value();
            let m = overlap_over_min(&a, &b).value();
            prop_assert_eq!(i, iou(&b, &a).value());
            prop_assert_eq!(m, overlap_over_min(&b, &a).value());
            prop_assert!((0.0..=1.0).contains(&i));
            prop_assert!((0.0..=1.0).contains(&m));
            prop_assert!(m >= i);
        }

        #[test]
        fn scores_translation_and_scale_invariant(
            a in arb_box(), b in arb_box(), t in -50.0..50.0f64, s in 0.25..4.0f64
        ) {
            let shift = |r: &BBox| bb(r.x + t, r.y + t, r.w, r.h);
            let scale = |r: &BBox| bb(r.x * s, r.y * s, r.w * s, r.h * s);
            let i = iou(&a, &b).value();
            let m = overlap_over_min(&a, &b).value();
            prop_assert!((iou(&shift(&a), &shift(&b)).value() - i).abs() < 1e-9);
            prop_assert!((iou(&scale(&a), &scale(&b)).value() - i).abs() < 1e-9);
            prop_assert!((overlap_over_min(&shift(&a), &shift(&b)).value() - m).abs() < 1e-9);
            prop_assert!((overlap_over_min(&scale(&a), &scale(&b)).value() - m).abs() < 1e-9);
        }

        #[test]
        fn center_translates(a in arb_box(), t in -50.0..50.0f64) {
            let c = center(&a);
            let moved = center(&bb(a.x + t, a.y + t, a.w, a.h));
            prop_assert!((moved.x - c.x - t).abs() < 1e-9);
            prop_assert!((moved.y - c.y - t).abs() < 1e-9);
        }

        #[test]
        fn swapping_extents_inverts_aspect(a in arb_box()) {
            let swapped = bb(a.x, a.y, a.h, a.w);
            prop_assert!((aspect_ratio(&a) * aspect_ratio(&swapped) - 1.0).abs() < 1e-12);
        }
    }
}
