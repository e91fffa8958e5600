//! Box geometry, center-in-box matching and greedy non-maximum suppression.
//!
//! Boxes use continuous pixel coordinates with the origin at the top-left
//! corner. Area is `(x_max - x_min) * (y_max - y_min)`; there is no `+1`
//! pixel convention.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangle in image coordinates.
///
/// Construction rejects non-finite coordinates and zero or negative area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox", into = "RawBox")]
pub struct BoundingBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

#[derive(Serialize, Deserialize)]
struct RawBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl TryFrom<RawBox> for BoundingBox {
    type Error = Error;

    fn try_from(raw: RawBox) -> Result<Self> {
        BoundingBox::new(raw.x_min, raw.y_min, raw.x_max, raw.y_max)
    }
}

impl From<BoundingBox> for RawBox {
    fn from(b: BoundingBox) -> Self {
        RawBox {
            x_min: b.x_min,
            y_min: b.y_min,
            x_max: b.x_max,
            y_max: b.y_max,
        }
    }
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "box coordinates must be finite, got ({x_min}, {y_min}, {x_max}, {y_max})"
            )));
        }
        if x_min >= x_max || y_min >= y_max {
            return Err(Error::InvalidInput(format!(
                "box must have positive area, got ({x_min}, {y_min}, {x_max}, {y_max})"
            )));
        }
        Ok(BoundingBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
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

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
        )
    }

    /// Boundary-inclusive point containment.
    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    /// Multiplies every coordinate by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::InvalidInput(format!(
                "scale factor must be positive and finite, got {s}"
            )));
        }
        BoundingBox::new(
            self.x_min * s,
            self.y_min * s,
            self.x_max * s,
            self.y_max * s,
        )
    }

    /// Lexicographic order on `(x_min, y_min, x_max, y_max)`.
    pub fn lexicographic_cmp(&self, other: &BoundingBox) -> Ordering {
        self.x_min
            .total_cmp(&other.x_min)
            .then(self.y_min.total_cmp(&other.y_min))
            .then(self.x_max.total_cmp(&other.x_max))
            .then(self.y_max.total_cmp(&other.y_max))
    }
}

/// Detector output class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LesionClass {
    Benign,
    Malignant,
}

impl fmt::Display for LesionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LesionClass::Benign => f.write_str("benign"),
            LesionClass::Malignant => f.write_str("malignant"),
        }
    }
}

/// A scored, classed box emitted by a detector for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    bbox: BoundingBox,
    score: f64,
    class: LesionClass,
    image_id: String,
}

impl Detection {
    pub fn new(
        image_id: impl Into<String>,
        bbox: BoundingBox,
        score: f64,
        class: LesionClass,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::InvalidInput(format!(
                "detection score must lie in [0, 1], got {score}"
            )));
        }
        Ok(Detection {
            bbox,
            score,
            class,
            image_id: image_id.into(),
        })
    }

    pub fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    pub fn class(&self) -> LesionClass {
        self.class
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn is_malignant(&self) -> bool {
        self.class == LesionClass::Malignant
    }

    /// Copy of this detection with its box scaled by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        Ok(Detection {
            bbox: self.bbox.scaled(s)?,
            ..self.clone()
        })
    }
}

/// Default IoU threshold of the final suppression pass. Mammograms show a
/// compressed 3D volume, so overlapping true findings are rare and a low
/// threshold is used.
pub const DEFAULT_NMS_IOU: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmsConfig {
    iou_threshold: f64,
}

impl NmsConfig {
    pub fn new(iou_threshold: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&iou_threshold) {
            return Err(Error::Config(format!(
                "NMS IoU threshold must lie in [0, 1], got {iou_threshold}"
            )));
        }
        Ok(NmsConfig { iou_threshold })
    }

    pub fn iou_threshold(&self) -> f64 {
        self.iou_threshold
    }
}

impl Default for NmsConfig {
    fn default() -> Self {
        NmsConfig {
            iou_threshold: DEFAULT_NMS_IOU,
        }
    }
}

/// Intersection over union. Symmetric, in `[0, 1]`, zero for disjoint boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// True when the center of the detection box lies inside `g`, edges included.
pub fn center_in_box(d: &Detection, g: &BoundingBox) -> bool {
    let (cx, cy) = d.bbox.center();
    g.contains_point(cx, cy)
}

/// Ranking used by NMS: score descending, then box coordinates ascending.
pub(crate) fn nms_order(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.bbox.lexicographic_cmp(&b.bbox))
}

/// Greedy class-wise non-maximum suppression for the detections of one image.
///
/// A detection is discarded when its IoU with an already kept detection of
/// the same class exceeds the threshold. The survivors are returned in
/// descending score order, ties ordered by box coordinates.
pub fn nms(detections: &[Detection], cfg: &NmsConfig) -> Result<Vec<Detection>> {
    let Some(first) = detections.first() else {
        return Ok(Vec::new());
    };
    if let Some(other) = detections.iter().find(|d| d.image_id != first.image_id) {
        return Err(Error::InvalidInput(format!(
            "NMS input mixes image ids {:?} and {:?}",
            first.image_id, other.image_id
        )));
    }

    let mut order: Vec<&Detection> = detections.iter().collect();
    order.sort_by(|a, b| nms_order(a, b));

    let mut kept: Vec<&Detection> = Vec::new();
    for cand in order {
        let suppressed = kept
            .iter()
            .any(|k| k.class == cand.class && iou(&k.bbox, &cand.bbox) > cfg.iou_threshold);
        if !suppressed {
            kept.push(cand);
        }
    }
    Ok(kept.into_iter().cloned().collect())
}
