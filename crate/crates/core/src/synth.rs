//! Seeded synthetic datasets with known operating characteristics.
//!
//! Layout: every image is split vertically. Lesions occupy up to four
//! disjoint slots stacked in the left half; false-positive marks sit in
//! distinct cells of a grid over the right half. A true-positive detection
//! is centered inside its own lesion and stays within that lesion's slot, so
//! no two detections of an image overlap (NMS keeps all of them) and the
//! generator knows the hit/miss partition without running the matcher. The
//! resulting FROC points and breast-level AUC go into a truth sidecar.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::dataset::{
    write_file, AnnotationRecord, BreastRecord, DetectionRecord, DetectionSource, ImageRecord,
    Manifest, FORMAT_VERSION,
};
use crate::error::{Error, Result};
use crate::geometry::LesionClass;
use crate::scoring::{Label, Laterality};

const SLOTS_PER_IMAGE: usize = 4;
const FP_CELL: i64 = 50;
const VIEWS: [&str; 2] = ["CC", "MLO"];

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DETECTIONS_FILE: &str = "detections.jsonl";
pub const TRUTH_FILE: &str = "synth_truth.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScoreDist {
    Constant { value: f64 },
    Uniform { lo: f64, hi: f64 },
    Beta { alpha: f64, beta: f64 },
}

impl ScoreDist {
    fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let ok = match *self {
            ScoreDist::Constant { value } => unit(value),
            ScoreDist::Uniform { lo, hi } => unit(lo) && unit(hi) && lo <= hi,
            ScoreDist::Beta { alpha, beta } => {
                alpha.is_finite() && beta.is_finite() && alpha > 0.0 && beta > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid score distribution {self:?}"
            )))
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            ScoreDist::Constant { value } => value,
            ScoreDist::Uniform { lo, hi } if lo == hi => lo,
            ScoreDist::Uniform { lo, hi } => rng.random_range(lo..=hi),
            ScoreDist::Beta { alpha, beta } => Beta::new(alpha, beta)
                .expect("validated parameters")
                .sample(rng),
        }
    }
}

/// A batch of detections sharing score distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthTier {
    /// Lesions receiving one true-positive detection in this tier.
    pub detected_lesions: usize,
    /// False-positive marks, each on a uniformly drawn image.
    pub false_positives: usize,
    pub tp_scores: ScoreDist,
    pub fp_scores: ScoreDist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n_images: usize,
    pub n_lesions: usize,
    #[serde(default = "default_images_per_breast")]
    pub images_per_breast: usize,
    #[serde(default = "default_width")]
    pub width: u32,
    #[serde(default = "default_height")]
    pub height: u32,
    #[serde(default = "default_models")]
    pub models: usize,
    pub tiers: Vec<SynthTier>,
    #[serde(default)]
    pub seed: u64,
}

fn default_images_per_breast() -> usize {
    2
}
fn default_width() -> u32 {
    1000
}
fn default_height() -> u32 {
    800
}
fn default_models() -> usize {
    1
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_images == 0 {
            return Err(Error::Config(
                "synthetic dataset needs at least one image".into(),
            ));
        }
        if self.images_per_breast == 0 || self.models == 0 {
            return Err(Error::Config(
                "images_per_breast and models must be positive".into(),
            ));
        }
        if self.width < 64 || self.height < 64 {
            return Err(Error::Config(
                "synthetic images must be at least 64x64".into(),
            ));
        }
        if self.n_lesions > self.n_images * SLOTS_PER_IMAGE {
            return Err(Error::Config(format!(
                "at most {SLOTS_PER_IMAGE} lesions per image fit, {} requested for {} images",
                self.n_lesions, self.n_images
            )));
        }
        let fps: usize = self.tiers.iter().map(|t| t.false_positives).sum();
        let capacity = self.fp_cells_per_image() * self.n_images;
        if fps > capacity {
            return Err(Error::Config(format!(
                "{fps} false positives requested but only {capacity} cells are free"
            )));
        }
        let detected: usize = self.tiers.iter().map(|t| t.detected_lesions).sum();
        if detected > self.n_lesions {
            return Err(Error::Config(format!(
                "tiers detect {detected} lesions but only {} exist",
                self.n_lesions
            )));
        }
        for t in &self.tiers {
            t.tp_scores.validate()?;
            t.fp_scores.validate()?;
        }
        Ok(())
    }

    fn fp_cells_per_image(&self) -> usize {
        let cols = i64::from(self.width) / 2 / FP_CELL;
        let rows = i64::from(self.height) / FP_CELL;
        (cols * rows) as usize
    }

    /// 100 images and 50 lesions: 45 lesions found at scores >= 0.5 together
    /// with 30 false positives, so threshold 0.5 gives 0.3 marks per image
    /// at sensitivity 0.9.
    pub fn sparse_marks() -> Self {
        SynthSpec {
            n_images: 100,
            n_lesions: 50,
            images_per_breast: 2,
            width: default_width(),
            height: default_height(),
            models: 1,
            tiers: vec![
                SynthTier {
                    detected_lesions: 44,
                    false_positives: 30,
                    tp_scores: ScoreDist::Uniform { lo: 0.55, hi: 1.0 },
                    fp_scores: ScoreDist::Uniform { lo: 0.55, hi: 0.9 },
                },
                SynthTier {
                    detected_lesions: 1,
                    false_positives: 0,
                    tp_scores: ScoreDist::Constant { value: 0.5 },
                    fp_scores: ScoreDist::Constant { value: 0.5 },
                },
            ],
            seed: 0,
        }
    }

    /// [`SynthSpec::sparse_marks`] plus low-scoring detections of the five
    /// missed lesions and 270 more false positives: threshold 0.2 gives
    /// 3 marks per image at sensitivity 1.
    pub fn full_sensitivity() -> Self {
        let mut spec = SynthSpec::sparse_marks();
        spec.tiers.extend([
            SynthTier {
                detected_lesions: 4,
                false_positives: 270,
                tp_scores: ScoreDist::Uniform { lo: 0.2, hi: 0.45 },
                fp_scores: ScoreDist::Uniform { lo: 0.2, hi: 0.45 },
            },
            SynthTier {
                detected_lesions: 1,
                false_positives: 0,
                tp_scores: ScoreDist::Constant { value: 0.2 },
                fp_scores: ScoreDist::Constant { value: 0.2 },
            },
        ]);
        spec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthPoint {
    pub threshold: f64,
    pub fp_per_image: f64,
    pub sensitivity: f64,
    pub false_positives: u64,
    pub lesions_hit: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTruth {
    pub model_id: String,
    pub froc_points: Vec<TruthPoint>,
    /// Breast-level AUC by pairwise comparison; `None` for single-class cohorts.
    pub breast_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub format_version: u32,
    pub spec: SynthSpec,
    pub total_images: u64,
    pub total_lesions: u64,
    pub models: Vec<ModelTruth>,
}

/// Generated dataset in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub manifest: Manifest,
    pub detections: Vec<DetectionRecord>,
    pub truth: SynthTruth,
}

struct PlacedLesion {
    image: usize,
    x_min: i64,
    y_min: i64,
    x_max: i64,
    y_max: i64,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn image_id(i: usize) -> String {
    format!("img{:04}", i + 1)
}

fn breast_of(image: usize, per_breast: usize) -> (String, Laterality) {
    let b = image / per_breast;
    let lat = if b % 2 == 0 {
        Laterality::Left
    } else {
        Laterality::Right
    };
    (format!("p{:04}", b / 2 + 1), lat)
}

/// Box of half-size at most `max_half` around `(cx, cy)`, kept inside
/// `region = [x_lo, y_lo, x_hi, y_hi]`, which must contain the center strictly.
fn box_around<R: Rng>(rng: &mut R, cx: i64, cy: i64, max_half: i64, region: [i64; 4]) -> [f64; 4] {
    let [x_lo, y_lo, x_hi, y_hi] = region;
    let hw = rng.random_range(1..=max_half).min(cx - x_lo).min(x_hi - cx);
    let hh = rng.random_range(1..=max_half).min(cy - y_lo).min(y_hi - cy);
    [
        (cx - hw) as f64,
        (cy - hh) as f64,
        (cx + hw) as f64,
        (cy + hh) as f64,
    ]
}

pub fn synth_generate(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let (w, h) = (i64::from(spec.width), i64::from(spec.height));
    let slot_h = h / SLOTS_PER_IMAGE as i64;
    let half_w = w / 2;
    let mut layout = stream(spec.seed, 0);

    let mut slots: Vec<(usize, usize)> = (0..spec.n_images)
        .flat_map(|i| (0..SLOTS_PER_IMAGE).map(move |k| (i, k)))
        .collect();
    slots.shuffle(&mut layout);
    slots.truncate(spec.n_lesions);
    slots.sort_unstable();

    let lesions: Vec<PlacedLesion> = slots
        .iter()
        .map(|&(image, k)| {
            let y0 = k as i64 * slot_h;
            let lw = layout
                .random_range(half_w * 3 / 10..=half_w * 8 / 10)
                .max(4);
            let lh = layout
                .random_range(slot_h * 3 / 10..=slot_h * 8 / 10)
                .max(4);
            let x_min = layout.random_range(0..=half_w - lw);
            let y_min = y0 + layout.random_range(0..=slot_h - lh);
            PlacedLesion {
                image,
                x_min,
                y_min,
                x_max: x_min + lw,
                y_max: y_min + lh,
            }
        })
        .collect();

    // which lesion each tier detects, and the geometry of every detection
    let mut lesion_order: Vec<usize> = (0..lesions.len()).collect();
    lesion_order.shuffle(&mut layout);
    let mut next = 0;
    let cols = (half_w / FP_CELL) as usize;
    let mut free_cells: Vec<Vec<usize>> =
        vec![(0..spec.fp_cells_per_image()).collect(); spec.n_images];
    // (tier, image, box, lesion index or None for a false positive)
    let mut geometry: Vec<(usize, usize, [f64; 4], Option<usize>)> = Vec::new();
    for (t, tier) in spec.tiers.iter().enumerate() {
        for &li in &lesion_order[next..next + tier.detected_lesions] {
            let l = &lesions[li];
            let cx = layout.random_range(l.x_min + 1..l.x_max);
            let cy = layout.random_range(l.y_min + 1..l.y_max);
            let slot_top = (l.y_min / slot_h) * slot_h;
            let b = box_around(
                &mut layout,
                cx,
                cy,
                40,
                [0, slot_top, half_w, slot_top + slot_h],
            );
            geometry.push((t, l.image, b, Some(li)));
        }
        next += tier.detected_lesions;
        for _ in 0..tier.false_positives {
            let (image, cell) = loop {
                let image = layout.random_range(0..spec.n_images);
                let free = &mut free_cells[image];
                if !free.is_empty() {
                    let k = layout.random_range(0..free.len());
                    break (image, free.swap_remove(k));
                }
            };
            let x_lo = half_w + (cell % cols) as i64 * FP_CELL;
            let y_lo = (cell / cols) as i64 * FP_CELL;
            let cx = layout.random_range(x_lo + 1..x_lo + FP_CELL);
            let cy = layout.random_range(y_lo + 1..y_lo + FP_CELL);
            let b = box_around(
                &mut layout,
                cx,
                cy,
                20,
                [x_lo, y_lo, x_lo + FP_CELL, y_lo + FP_CELL],
            );
            geometry.push((t, image, b, None));
        }
    }

    let mut images: Vec<ImageRecord> = (0..spec.n_images)
        .map(|i| {
            let (patient, lat) = breast_of(i, spec.images_per_breast);
            ImageRecord {
                image_id: image_id(i),
                breast_id: format!("{patient}-{lat}"),
                view: VIEWS[(i % spec.images_per_breast) % VIEWS.len()].to_owned(),
                width: spec.width,
                height: spec.height,
                annotations: Vec::new(),
            }
        })
        .collect();
    for (n, l) in lesions.iter().enumerate() {
        images[l.image].annotations.push(AnnotationRecord {
            lesion_id: format!("les{:04}", n + 1),
            class: LesionClass::Malignant,
            x_min: l.x_min as f64,
            y_min: l.y_min as f64,
            x_max: l.x_max as f64,
            y_max: l.y_max as f64,
        });
    }
    let n_breasts = spec.n_images.div_ceil(spec.images_per_breast);
    let breast_positive: Vec<bool> = (0..n_breasts)
        .map(|b| {
            lesions
                .iter()
                .any(|l| l.image / spec.images_per_breast == b)
        })
        .collect();
    let breasts: Vec<BreastRecord> = (0..n_breasts)
        .map(|b| {
            let (patient_id, laterality) =
                breast_of(b * spec.images_per_breast, spec.images_per_breast);
            BreastRecord {
                patient_id,
                laterality,
                label: if breast_positive[b] {
                    Label::Malignant
                } else {
                    Label::Negative
                },
            }
        })
        .collect();

    let mut detections = Vec::with_capacity(geometry.len() * spec.models);
    let mut truth_models = Vec::with_capacity(spec.models);
    for m in 0..spec.models {
        let model_id = format!("m{m}");
        let mut rng = stream(spec.seed, m as u64 + 1);
        let scores: Vec<f64> = geometry
            .iter()
            .map(|&(t, _, _, lesion)| {
                let tier = &spec.tiers[t];
                match lesion {
                    Some(_) => tier.tp_scores.sample(&mut rng),
                    None => tier.fp_scores.sample(&mut rng),
                }
            })
            .collect();

        let mut order: Vec<usize> = (0..geometry.len()).collect();
        order.sort_by_key(|&i| geometry[i].1);
        for i in order {
            let (_, image, b, _) = geometry[i];
            detections.push(DetectionRecord {
                format_version: Some(FORMAT_VERSION),
                image_id: image_id(image),
                x_min: b[0],
                y_min: b[1],
                x_max: b[2],
                y_max: b[3],
                score: scores[i],
                class: LesionClass::Malignant,
                model_id: Some(model_id.clone()),
            });
        }

        truth_models.push(ModelTruth {
            froc_points: truth_froc(
                &geometry,
                &scores,
                spec.n_images as u64,
                lesions.len() as u64,
            ),
            breast_auc: truth_auc(&geometry, &scores, spec, &breast_positive),
            model_id,
        });
    }

    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        images,
        breasts,
        exclusions: Vec::new(),
        detections: vec![DetectionSource {
            model_id: "m0".into(),
            path: DETECTIONS_FILE.into(),
        }],
    };
    Ok(SynthOutput {
        manifest,
        detections,
        truth: SynthTruth {
            format_version: FORMAT_VERSION,
            spec: spec.clone(),
            total_images: spec.n_images as u64,
            total_lesions: lesions.len() as u64,
            models: truth_models,
        },
    })
}

/// Counts hits and marks above every distinct score directly from the
/// generator's labels.
fn truth_froc(
    geometry: &[(usize, usize, [f64; 4], Option<usize>)],
    scores: &[f64],
    n_images: u64,
    n_lesions: u64,
) -> Vec<TruthPoint> {
    if n_lesions == 0 {
        return Vec::new();
    }
    let mut thresholds = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    thresholds
        .into_iter()
        .map(|t| {
            let mut fp = 0u64;
            let mut hit = 0u64;
            for (g, &s) in geometry.iter().zip(scores) {
                if s >= t {
                    match g.3 {
                        Some(_) => hit += 1,
                        None => fp += 1,
                    }
                }
            }
            TruthPoint {
                threshold: t,
                fp_per_image: fp as f64 / n_images as f64,
                sensitivity: hit as f64 / n_lesions as f64,
                false_positives: fp,
                lesions_hit: hit,
            }
        })
        .collect()
}

fn truth_auc(
    geometry: &[(usize, usize, [f64; 4], Option<usize>)],
    scores: &[f64],
    spec: &SynthSpec,
    breast_positive: &[bool],
) -> Option<f64> {
    let mut image_max = vec![0.0f64; spec.n_images];
    for (g, &s) in geometry.iter().zip(scores) {
        image_max[g.1] = image_max[g.1].max(s);
    }
    let breast_scores: Vec<f64> = image_max
        .chunks(spec.images_per_breast)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    let pos: Vec<f64> = breast_scores
        .iter()
        .zip(breast_positive)
        .filter(|(_, &p)| p)
        .map(|(&s, _)| s)
        .collect();
    let neg: Vec<f64> = breast_scores
        .iter()
        .zip(breast_positive)
        .filter(|(_, &p)| !p)
        .map(|(&s, _)| s)
        .collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut wins = 0.0;
    for &p in &pos {
        for &n in &neg {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    Some(wins / (pos.len() * neg.len()) as f64)
}

fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("synthetic outputs serialize");
    v.push(b'\n');
    v
}

/// Writes manifest, detections and truth sidecar into `dir`.
pub fn write_synth(dir: &Path, out: &SynthOutput) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join(MANIFEST_FILE), &to_json_bytes(&out.manifest))?;
    let mut lines = Vec::new();
    for d in &out.detections {
        serde_json::to_writer(&mut lines, d).expect("detection records serialize");
        lines.push(b'\n');
    }
    write_file(&dir.join(DETECTIONS_FILE), &lines)?;
    write_file(&dir.join(TRUTH_FILE), &to_json_bytes(&out.truth))
}
