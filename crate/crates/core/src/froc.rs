//! Lesion-level FROC analysis.
//!
//! A detection is a hit for every lesion box that contains its center and a
//! false-positive mark otherwise. Only malignant detections are marks; benign
//! detector output is ignored here. Images without lesions stay in the
//! per-image denominator.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::bootstrap::{central_interval, run_replicates, BootstrapConfig};
use crate::error::{Error, Result};
use crate::geometry::{center_in_box, BoundingBox, Detection};
use crate::roc::BandPoint;

/// Default operating points, in false-positive marks per image.
pub const DEFAULT_FP_TARGETS: [f64; 2] = [0.3, 3.0];

/// Ground-truth malignant lesion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionAnnotation {
    pub lesion_id: String,
    pub image_id: String,
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FalsePositive {
    pub image_id: String,
    pub detection_index: usize,
    pub score: f64,
}

/// Partition of one image's detections into hits and false positives.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// Credited lesions only; each entry lists `(detection index, score)`.
    pub matched_lesions: BTreeMap<String, Vec<(usize, f64)>>,
    pub false_positives: Vec<FalsePositive>,
}

/// Applies the center-in-box rule to the detections of one image.
pub fn match_detections(
    image_id: &str,
    detections: &[Detection],
    lesions: &[LesionAnnotation],
) -> Result<MatchResult> {
    if let Some(d) = detections.iter().find(|d| d.image_id() != image_id) {
        return Err(Error::InvalidInput(format!(
            "detection for image {:?} matched against image {image_id:?}",
            d.image_id()
        )));
    }
    if let Some(l) = lesions.iter().find(|l| l.image_id != image_id) {
        return Err(Error::InvalidInput(format!(
            "lesion {:?} belongs to image {:?}, not {image_id:?}",
            l.lesion_id, l.image_id
        )));
    }

    let mut result = MatchResult::default();
    for (idx, d) in detections.iter().enumerate() {
        let mut hit = false;
        for l in lesions.iter().filter(|l| center_in_box(d, &l.bbox)) {
            hit = true;
            result
                .matched_lesions
                .entry(l.lesion_id.clone())
                .or_default()
                .push((idx, d.score()));
        }
        if !hit {
            result.false_positives.push(FalsePositive {
                image_id: image_id.to_owned(),
                detection_index: idx,
                score: d.score(),
            });
        }
    }
    Ok(result)
}

/// Detections and malignant lesions of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct FrocImage {
    pub image_id: String,
    pub detections: Vec<Detection>,
    pub lesions: Vec<LesionAnnotation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrocPoint {
    /// Marks with `score >= threshold` are counted.
    pub threshold: f64,
    pub fp_per_image: f64,
    pub sensitivity: f64,
    pub false_positives: u64,
    pub lesions_hit: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrocCurve {
    /// Ordered by decreasing threshold.
    pub points: Vec<FrocPoint>,
    pub total_images: u64,
    pub total_lesions: u64,
}

impl FrocCurve {
    /// Largest sensitivity reached with at most `fp_per_image` marks per
    /// image; `0` when no point qualifies.
    pub fn sensitivity_at(&self, fp_per_image: f64) -> f64 {
        let idx = self
            .points
            .partition_point(|p| p.fp_per_image <= fp_per_image);
        if idx == 0 {
            0.0
        } else {
            self.points[idx - 1].sensitivity
        }
    }

    pub fn max_sensitivity(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.sensitivity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub target_fp_per_image: f64,
    pub sensitivity: f64,
    pub threshold: f64,
    pub fp_per_image: f64,
}

/// Point with the greatest sensitivity among those with at most
/// `target_fp_per_image` marks per image; among equals the highest threshold
/// wins. Returns sensitivity 0 at threshold 1.0 when nothing qualifies.
pub fn operating_point(curve: &FrocCurve, target_fp_per_image: f64) -> OperatingPoint {
    let mut best: Option<&FrocPoint> = None;
    for p in curve
        .points
        .iter()
        .filter(|p| p.fp_per_image <= target_fp_per_image)
    {
        if best.is_none_or(|b| p.sensitivity > b.sensitivity) {
            best = Some(p);
        }
    }
    match best {
        Some(p) => OperatingPoint {
            target_fp_per_image,
            sensitivity: p.sensitivity,
            threshold: p.threshold,
            fp_per_image: p.fp_per_image,
        },
        None => OperatingPoint {
            target_fp_per_image,
            sensitivity: 0.0,
            threshold: 1.0,
            fp_per_image: 0.0,
        },
    }
}

#[derive(Debug, Clone, Copy)]
enum EventKind {
    Hit,
    Mark,
}

/// Sweep state shared by the curve and its bootstrap.
struct FrocEvents {
    thresholds: Vec<f64>,
    /// `(score, image index, kind)`, descending score. A credited lesion
    /// contributes one hit at its best crediting score.
    events: Vec<(f64, usize, EventKind)>,
    lesions_per_image: Vec<u64>,
}

impl FrocEvents {
    fn new(images: &[FrocImage]) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::InvalidInput("FROC needs at least one image".into()));
        }
        let mut seen_images = HashSet::new();
        let mut seen_lesions = HashSet::new();
        let mut thresholds = Vec::new();
        let mut events = Vec::new();
        let mut lesions_per_image = Vec::with_capacity(images.len());

        for (i, img) in images.iter().enumerate() {
            if !seen_images.insert(img.image_id.as_str()) {
                return Err(Error::InvalidInput(format!(
                    "image {:?} listed twice",
                    img.image_id
                )));
            }
            for l in &img.lesions {
                if !seen_lesions.insert(l.lesion_id.as_str()) {
                    return Err(Error::InvalidInput(format!(
                        "lesion id {:?} is not unique",
                        l.lesion_id
                    )));
                }
            }
            let marks: Vec<Detection> = img
                .detections
                .iter()
                .filter(|d| d.is_malignant())
                .cloned()
                .collect();
            let m = match_detections(&img.image_id, &marks, &img.lesions)?;
            thresholds.extend(marks.iter().map(Detection::score));
            for hits in m.matched_lesions.values() {
                let best = hits.iter().map(|h| h.1).fold(f64::NEG_INFINITY, f64::max);
                events.push((best, i, EventKind::Hit));
            }
            events.extend(
                m.false_positives
                    .iter()
                    .map(|f| (f.score, i, EventKind::Mark)),
            );
            lesions_per_image.push(img.lesions.len() as u64);
        }

        thresholds.sort_by(|a, b| b.total_cmp(a));
        thresholds.dedup();
        events.sort_by(|a, b| b.0.total_cmp(&a.0));
        Ok(FrocEvents {
            thresholds,
            events,
            lesions_per_image,
        })
    }

    fn total_lesions(&self, weights: &[u32]) -> u64 {
        self.lesions_per_image
            .iter()
            .zip(weights)
            .map(|(&l, &w)| l * u64::from(w))
            .sum()
    }

    /// Curve for image multiplicities `weights`; requires at least one lesion.
    fn curve(&self, weights: &[u32]) -> FrocCurve {
        let total_images: u64 = weights.iter().map(|&w| u64::from(w)).sum();
        let total_lesions = self.total_lesions(weights);
        let mut points = Vec::with_capacity(self.thresholds.len());
        let (mut fp, mut hit) = (0u64, 0u64);
        let mut next = 0;
        for &t in &self.thresholds {
            while next < self.events.len() && self.events[next].0 >= t {
                let (_, img, kind) = self.events[next];
                let w = u64::from(weights[img]);
                match kind {
                    EventKind::Hit => hit += w,
                    EventKind::Mark => fp += w,
                }
                next += 1;
            }
            points.push(FrocPoint {
                threshold: t,
                fp_per_image: fp as f64 / total_images as f64,
                sensitivity: hit as f64 / total_lesions as f64,
                false_positives: fp,
                lesions_hit: hit,
            });
        }
        FrocCurve {
            points,
            total_images,
            total_lesions,
        }
    }
}

/// FROC curve over all images, one point per distinct malignant detection
/// score in descending order.
pub fn froc_curve(images: &[FrocImage]) -> Result<FrocCurve> {
    let events = FrocEvents::new(images)?;
    let weights = vec![1; images.len()];
    if events.total_lesions(&weights) == 0 {
        return Err(Error::Degenerate(
            "FROC sensitivity is undefined: the dataset has no lesions".into(),
        ));
    }
    Ok(events.curve(&weights))
}

/// Distinct achieved false-positive rates of `curve` together with `targets`.
pub fn default_fp_grid(curve: &FrocCurve, targets: &[f64]) -> Vec<f64> {
    let mut grid: Vec<f64> = curve
        .points
        .iter()
        .map(|p| p.fp_per_image)
        .chain(targets.iter().copied())
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrocBand {
    pub band: Vec<BandPoint>,
    pub replicates: usize,
    pub interval: f64,
    pub seed: u64,
    pub degenerate_redraws: u64,
}

impl FrocBand {
    /// Band entry at exactly `fp_per_image`, if it is on the grid.
    pub fn at(&self, fp_per_image: f64) -> Option<&BandPoint> {
        self.band.iter().find(|b| b.x == fp_per_image)
    }
}

/// Pointwise sensitivity interval on `grid`, resampling images with
/// replacement. Lesions travel with their image; resamples without any
/// lesion are redrawn and counted.
pub fn froc_bootstrap_band(
    images: &[FrocImage],
    cfg: &BootstrapConfig,
    grid: &[f64],
) -> Result<FrocBand> {
    let events = FrocEvents::new(images)?;
    if events.total_lesions(&vec![1; images.len()]) == 0 {
        return Err(Error::Degenerate(
            "FROC sensitivity is undefined: the dataset has no lesions".into(),
        ));
    }
    if let Some(g) = grid.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
        return Err(Error::InvalidInput(format!(
            "FROC grid values must be finite and nonnegative, got {g}"
        )));
    }

    let usable = |w: &[u32]| events.total_lesions(w) > 0;
    let stat = |w: &[u32]| {
        let curve = events.curve(w);
        grid.iter()
            .map(|&g| curve.sensitivity_at(g))
            .collect::<Vec<f64>>()
    };
    let (reps, degenerate_redraws) = run_replicates(cfg, images.len(), usable, stat)?;

    let mut column = Vec::with_capacity(reps.len());
    let band = grid
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            column.clear();
            column.extend(reps.iter().map(|r| r[j]));
            let (lo, hi) = central_interval(&mut column, cfg);
            BandPoint { x, lo, hi }
        })
        .collect();

    Ok(FrocBand {
        band,
        replicates: cfg.replicates(),
        interval: cfg.interval(),
        seed: cfg.seed(),
        degenerate_redraws,
    })
}
