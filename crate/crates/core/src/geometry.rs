//! Axis-aligned boxes in continuous pixel coordinates (origin top-left).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Corner-form box. Construction rejects non-finite and zero-area boxes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let finite = [x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite());
        if !finite || x_min >= x_max || y_min >= y_max {
            return Err(Error::InvalidBox(x_min, y_min, x_max, y_max));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Builds a box from COCO `[x, y, width, height]`.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if !(w > 0.0 && h > 0.0) {
            return Err(Error::InvalidBox(x, y, x + w, y + h));
        }
        Self::new(x, y, x + w, y + h)
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
    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }
    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }
    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }

    pub fn to_xywh(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.width(), self.height()]
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    /// Shifts the box by `(-dx, -dy)`, i.e. expresses it relative to origin `(dx, dy)`.
    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self {
            x_min: self.x_min - dx,
            y_min: self.y_min - dy,
            x_max: self.x_max - dx,
            y_max: self.y_max - dy,
        }
    }

    pub fn scale(&self, sx: f64, sy: f64) -> Result<Self> {
        Self::new(
            self.x_min * sx,
            self.y_min * sy,
            self.x_max * sx,
            self.y_max * sy,
        )
    }

    pub fn contains(&self, other: &BoundingBox) -> bool {
        self.x_min <= other.x_min
            && self.y_min <= other.y_min
            && self.x_max >= other.x_max
            && self.y_max >= other.y_max
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        b.to_array()
    }
}

pub fn box_area(b: &BoundingBox) -> f64 {
    b.width() * b.height()
}

fn intersection_area(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let w = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let h = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    w * h
}

/// Intersection over union. Symmetric, and exactly 1 for identical boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    if a == b {
        return 1.0;
    }
    let inter = intersection_area(a, b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = box_area(a) + box_area(b) - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Intersection of `b` with `region`, or `None` when it has zero area.
pub fn clip_box(b: &BoundingBox, region: &BoundingBox) -> Option<BoundingBox> {
    BoundingBox::new(
        b.x_min.max(region.x_min),
        b.y_min.max(region.y_min),
        b.x_max.min(region.x_max),
        b.y_max.min(region.y_max),
    )
    .ok()
}
