//! Normalized axis-aligned boxes in corner format.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An axis-aligned box in normalized image coordinates.
///
/// Coordinates are stored as `(x_min, y_min, x_max, y_max)`, each in `[0, 1]`,
/// with strictly positive width and height. Construction is the only place
/// these invariants are checked; every other operation assumes them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let fail = |reason| {
            Err(Error::InvalidBox {
                x_min,
                y_min,
                x_max,
                y_max,
                reason,
            })
        };
        let coords = [x_min, y_min, x_max, y_max];
        if coords.iter().any(|c| !c.is_finite()) {
            return fail("non-finite coordinate");
        }
        if coords.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return fail("coordinate outside [0, 1]");
        }
        if x_min >= x_max || y_min >= y_max {
            return fail("zero or negative area");
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Converts a center-format box `(cx, cy, w, h)` to corner format.
    /// Boxes that would leave the unit square are rejected, not clamped.
    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        let (x_min, y_min) = (cx - w / 2.0, cy - h / 2.0);
        let (x_max, y_max) = (cx + w / 2.0, cy + h / 2.0);
        if !(w > 0.0 && h > 0.0) {
            return Err(Error::InvalidBox {
                x_min,
                y_min,
                x_max,
                y_max,
                reason: "width and height must be positive",
            });
        }
        Self::new(x_min, y_min, x_max, y_max)
    }

    pub fn to_center(&self) -> (f64, f64, f64, f64) {
        (
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
            self.x_max - self.x_min,
            self.y_max - self.y_min,
        )
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn y_min(&self) -> f64 {
        self.y_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Lexicographic order on `(x_min, y_min, x_max, y_max)`. Used as the
    /// final tie-break wherever a total order over boxes is needed.
    pub fn lex_cmp(&self, other: &BBox) -> Ordering {
        self.to_array()
            .iter()
            .zip(other.to_array().iter())
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(c: [f64; 4]) -> Result<Self> {
        BBox::new(c[0], c[1], c[2], c[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

/// Intersection over union. Symmetric, in `[0, 1]`, exactly 1 for identical boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    if a == b {
        return 1.0;
    }
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Fraction of `inner`'s area covered by `outer`.
pub fn containment(inner: &BBox, outer: &BBox) -> f64 {
    if inner == outer {
        return 1.0;
    }
    (inner.intersection_area(outer) / inner.area()).clamp(0.0, 1.0)
}
