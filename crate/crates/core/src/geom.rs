//! Axis-aligned box arithmetic: IoU, ground-truth coverage, contextual
//! padding, clamping, and non-maximum suppression.
//!
//! Coordinates are real-valued; integer pixel boxes embed as reals and areas
//! are continuous products `(x2 - x1) * (y2 - y1)`. A box carries no unit tag;
//! the enclosing dataset declares whether coordinates are pixels or normalized.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors produced by geometry operations.
#[derive(Debug, Error, PartialEq)]
pub enum GeomError {
    /// Coordinates violate `x1 <= x2 && y1 <= y2` or are non-finite.
    #[error("invalid box [{x1}, {y1}, {x2}, {y2}]: {reason}")]
    InvalidBox {
        x1: f64,
        y1: f64,
        x2: f64,
        y2: f64,
        reason: &'static str,
    },
    /// A ground-truth box with zero area cannot be scored against.
    #[error("ground-truth box has zero area and cannot be scored")]
    ZeroAreaGroundTruth,
}

/// An axis-aligned rectangle `[x1, y1, x2, y2]` with `x1 <= x2`, `y1 <= y2`.
///
/// Degenerate (zero-area) boxes are representable and valid inputs.
/// Serializes as a 4-element array in all file formats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 4]", try_from = "[f64; 4]")]
pub struct BBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BBox {
    /// Builds a box, rejecting non-finite or inverted coordinates.
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GeomError> {
        if !(x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite()) {
            return Err(GeomError::InvalidBox {
                x1,
                y1,
                x2,
                y2,
                reason: "non-finite coordinate",
            });
        }
        if x1 > x2 || y1 > y2 {
            return Err(GeomError::InvalidBox {
                x1,
                y1,
                x2,
                y2,
                reason: "inverted corners",
            });
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    pub fn y1(&self) -> f64 {
        self.y1
    }

    pub fn x2(&self) -> f64 {
        self.x2
    }

    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Intersection area with another box; zero when they do not overlap.
    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        w * h
    }

    /// True when `other` lies entirely inside `self` (boundaries inclusive).
    pub fn contains(&self, other: &BBox) -> bool {
        self.x1 <= other.x1 && self.y1 <= other.y1 && self.x2 >= other.x2 && self.y2 >= other.y2
    }

    /// Clamps the box into `bounds`. The result still satisfies the corner
    /// ordering invariant even when the box lies entirely outside.
    pub fn clamp_to(&self, bounds: &BBox) -> BBox {
        let x1 = self.x1.clamp(bounds.x1, bounds.x2);
        let y1 = self.y1.clamp(bounds.y1, bounds.y2);
        let x2 = self.x2.clamp(bounds.x1, bounds.x2);
        let y2 = self.y2.clamp(bounds.y1, bounds.y2);
        BBox { x1, y1, x2, y2 }
    }

    pub fn corners(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> [f64; 4] {
        b.corners()
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = GeomError;

    fn try_from(v: [f64; 4]) -> Result<Self, GeomError> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

/// A box with a selection confidence, as fed to [`nms`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox {
    pub bbox: BBox,
    pub score: f64,
}

impl ScoredBox {
    pub fn new(bbox: BBox, score: f64) -> Self {
        Self { bbox, score }
    }
}

/// Intersection over union of two boxes, in `[0, 1]`.
///
/// Defined as 0 (not NaN) when the union has zero area, so the function is
/// total on valid boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Fraction of the ground-truth area covered by `pred`, in `[0, 1]`.
///
/// Evidence-inclusive predictions are not penalized: any `pred` containing
/// `gt` scores 1 regardless of its extra area.
pub fn coverage(pred: &BBox, gt: &BBox) -> Result<f64, GeomError> {
    let gt_area = gt.area();
    if gt_area <= 0.0 {
        return Err(GeomError::ZeroAreaGroundTruth);
    }
    Ok(pred.intersection_area(gt) / gt_area)
}

/// Expands each side of `b` outward by `frac` times the corresponding side
/// length, then clamps the result into `bounds`.
pub fn pad_box(b: &BBox, frac: f64, bounds: &BBox) -> BBox {
    let dx = b.width() * frac;
    let dy = b.height() * frac;
    let padded = BBox {
        x1: b.x1 - dx,
        y1: b.y1 - dy,
        x2: b.x2 + dx,
        y2: b.y2 + dy,
    };
    padded.clamp_to(bounds)
}

/// Greedy non-maximum suppression.
///
/// Candidates are visited in descending score order (ties keep input order);
/// a candidate is suppressed iff its IoU with an already-kept candidate
/// exceeds `iou_thresh`. Kept candidates are returned in visit order.
pub fn nms(cands: &[ScoredBox], iou_thresh: f64) -> Vec<ScoredBox> {
    let mut order: Vec<usize> = (0..cands.len()).collect();
    // Stable sort keeps input order among equal scores.
    order.sort_by(|&i, &j| {
        cands[j]
            .score
            .partial_cmp(&cands[i].score)
            .expect("nms scores must be finite")
    });

    let mut kept: Vec<ScoredBox> = Vec::new();
    for &i in &order {
        let suppressed = kept
            .iter()
            .any(|k| iou(&k.bbox, &cands[i].bbox) > iou_thresh);
        if !suppressed {
            kept.push(cands[i]);
        }
    }
    kept
}
