//! Dataset manifest and detection interchange formats.
//!
//! The manifest is one JSON document listing images, breasts, malignant and
//! benign annotations, an exclusion list and the detection files per model.
//! Detections are JSON lines, one record per detection:
//!
//! ```text
//! {"format_version":1,"image_id":"img0001","x_min":10,"y_min":20,"x_max":40,"y_max":60,"score":0.93,"class":"malignant","model_id":"m0"}
//! ```
//!
//! `format_version` and `model_id` are optional on input.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::froc::{FrocImage, LesionAnnotation};
use crate::geometry::{nms, BoundingBox, Detection, LesionClass, NmsConfig};
use crate::scoring::{
    breast_score, ensemble_score, image_score, BreastCase, ImageScore, Label, Laterality,
};

pub const FORMAT_VERSION: u32 = 1;

/// Model id given to detections that name none.
pub const DEFAULT_MODEL_ID: &str = "default";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub images: Vec<ImageRecord>,
    pub breasts: Vec<BreastRecord>,
    /// Patient, breast or image ids left out of the evaluation.
    #[serde(default)]
    pub exclusions: Vec<String>,
    /// Detection files, relative to the manifest's directory.
    #[serde(default)]
    pub detections: Vec<DetectionSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageRecord {
    pub image_id: String,
    /// `"<patient_id>-<L|R>"`.
    pub breast_id: String,
    pub view: String,
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub annotations: Vec<AnnotationRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationRecord {
    pub lesion_id: String,
    pub class: LesionClass,
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BreastRecord {
    pub patient_id: String,
    pub laterality: Laterality,
    pub label: Label,
}

impl BreastRecord {
    pub fn breast_id(&self) -> String {
        format!("{}-{}", self.patient_id, self.laterality)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionSource {
    pub model_id: String,
    pub path: PathBuf,
}

/// One line of a detections file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format_version: Option<u32>,
    pub image_id: String,
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub score: f64,
    pub class: LesionClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
}

impl DetectionRecord {
    pub fn from_detection(d: &Detection, model_id: &str) -> Self {
        let b = d.bbox();
        DetectionRecord {
            format_version: Some(FORMAT_VERSION),
            image_id: d.image_id().to_owned(),
            x_min: b.x_min(),
            y_min: b.y_min(),
            x_max: b.x_max(),
            y_max: b.y_max(),
            score: d.score(),
            class: d.class(),
            model_id: Some(model_id.to_owned()),
        }
    }

    pub fn to_detection(&self) -> Result<Detection> {
        let b = BoundingBox::new(self.x_min, self.y_min, self.x_max, self.y_max)?;
        Detection::new(self.image_id.clone(), b, self.score, self.class)
    }
}

/// Detections keyed by model id, in file order.
pub type ModelDetections = BTreeMap<String, Vec<Detection>>;

/// Parses a JSON-lines detection file. Records without a model id are
/// attributed to `default_model`. Errors carry `path:line`.
pub fn read_detections(path: &Path, default_model: &str) -> Result<ModelDetections> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_detections(&text, &path.display().to_string(), default_model)
}

pub(crate) fn parse_detections(
    text: &str,
    origin: &str,
    default_model: &str,
) -> Result<ModelDetections> {
    let mut out = ModelDetections::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let loc = format!("{origin}:{}", i + 1);
        let rec: DetectionRecord =
            serde_json::from_str(line).map_err(|e| Error::validation(&loc, e.to_string()))?;
        if let Some(v) = rec.format_version {
            if v != FORMAT_VERSION {
                return Err(Error::validation(
                    &loc,
                    format!("unsupported format_version {v}"),
                ));
            }
        }
        let det = rec
            .to_detection()
            .map_err(|e| Error::validation(&loc, e.to_string()))?;
        let model = rec.model_id.unwrap_or_else(|| default_model.to_owned());
        out.entry(model).or_default().push(det);
    }
    Ok(out)
}

/// Writes detections as JSON lines, models in key order.
pub fn write_detections(path: &Path, detections: &ModelDetections) -> Result<()> {
    let mut buf = Vec::new();
    for (model, dets) in detections {
        for d in dets {
            serde_json::to_writer(&mut buf, &DetectionRecord::from_detection(d, model))
                .expect("detection records serialize");
            buf.push(b'\n');
        }
    }
    write_file(path, &buf)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let m: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::validation(path.display().to_string(), e.to_string()))?;
    if m.format_version != FORMAT_VERSION {
        return Err(Error::validation(
            path.display().to_string(),
            format!("unsupported format_version {}", m.format_version),
        ));
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ImageInfo {
    pub image_id: String,
    pub breast_id: String,
    pub view: String,
    pub width: u32,
    pub height: u32,
}

/// What ingestion dropped.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub benign_annotations_dropped: usize,
    pub excluded_images: usize,
    pub excluded_breasts: usize,
    pub excluded_detections: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreastScore {
    pub breast_id: String,
    pub label: Label,
    pub score: f64,
    pub image_ids: Vec<String>,
}

/// Cross-referenced, validated evaluation data.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Vec<ImageInfo>,
    pub breasts: Vec<BreastCase>,
    /// Malignant lesions only.
    pub lesions: Vec<LesionAnnotation>,
    /// Every declared model has an entry, possibly empty.
    pub detections: ModelDetections,
    pub report: LoadReport,
}

/// Loads a manifest and its detections. When `detection_paths` is empty the
/// manifest's own detection sources are used.
pub fn load_dataset(manifest_path: &Path, detection_paths: &[PathBuf]) -> Result<Dataset> {
    let manifest = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut detections = ModelDetections::new();
    let mut origins: BTreeMap<String, String> = BTreeMap::new();
    let sources: Vec<(String, PathBuf)> = if detection_paths.is_empty() {
        manifest
            .detections
            .iter()
            .map(|s| (s.model_id.clone(), base.join(&s.path)))
            .collect()
    } else {
        detection_paths
            .iter()
            .map(|p| (DEFAULT_MODEL_ID.to_owned(), p.clone()))
            .collect()
    };
    for (model, path) in &sources {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let origin = path.display().to_string();
        let parsed = parse_detections(&text, &origin, model)?;
        if detection_paths.is_empty() {
            detections.entry(model.clone()).or_default();
        }
        for (m, dets) in parsed {
            origins.entry(m.clone()).or_insert_with(|| origin.clone());
            detections.entry(m).or_default().extend(dets);
        }
    }
    build_dataset(&manifest, detections, &manifest_path.display().to_string())
}

/// Validates `manifest` against `detections`. `origin` prefixes error locations.
pub fn build_dataset(
    manifest: &Manifest,
    detections: ModelDetections,
    origin: &str,
) -> Result<Dataset> {
    let loc = |what: String| format!("{origin}: {what}");
    let mut report = LoadReport::default();

    let mut breast_ids: HashMap<String, usize> = HashMap::new();
    let mut patients: HashSet<&str> = HashSet::new();
    for (i, b) in manifest.breasts.iter().enumerate() {
        if b.patient_id.is_empty() {
            return Err(Error::validation(
                loc(format!("breasts[{i}]")),
                "empty patient_id",
            ));
        }
        if breast_ids.insert(b.breast_id(), i).is_some() {
            return Err(Error::validation(
                loc(format!("breasts[{i}]")),
                format!("duplicate breast {}", b.breast_id()),
            ));
        }
        patients.insert(&b.patient_id);
    }

    let mut image_ids: HashSet<&str> = HashSet::new();
    for (i, img) in manifest.images.iter().enumerate() {
        if !image_ids.insert(&img.image_id) {
            return Err(Error::validation(
                loc(format!("images[{i}]")),
                format!("duplicate image_id {:?}", img.image_id),
            ));
        }
        if !breast_ids.contains_key(&img.breast_id) {
            return Err(Error::validation(
                loc(format!("images[{i}]")),
                format!("unknown breast_id {:?}", img.breast_id),
            ));
        }
    }

    let exclusions: BTreeSet<&str> = manifest.exclusions.iter().map(String::as_str).collect();
    for (i, x) in manifest.exclusions.iter().enumerate() {
        let known = patients.contains(x.as_str())
            || breast_ids.contains_key(x)
            || image_ids.contains(x.as_str());
        if !known {
            return Err(Error::validation(
                loc(format!("exclusions[{i}]")),
                format!("{x:?} names no patient, breast or image"),
            ));
        }
    }
    let breast_excluded = |b: &BreastRecord| {
        exclusions.contains(b.patient_id.as_str()) || exclusions.contains(b.breast_id().as_str())
    };

    // annotations: validate everything, keep malignant lesions of included images
    let mut lesion_ids: HashSet<&str> = HashSet::new();
    let mut lesions = Vec::new();
    let mut malignant_breasts: HashSet<&str> = HashSet::new();
    let mut included_images = Vec::new();
    for (i, img) in manifest.images.iter().enumerate() {
        let breast = &manifest.breasts[breast_ids[&img.breast_id]];
        let excluded = breast_excluded(breast) || exclusions.contains(img.image_id.as_str());
        for (j, a) in img.annotations.iter().enumerate() {
            let here = loc(format!("images[{i}].annotations[{j}]"));
            if !lesion_ids.insert(&a.lesion_id) {
                return Err(Error::validation(
                    here,
                    format!("duplicate lesion_id {:?}", a.lesion_id),
                ));
            }
            let bbox = BoundingBox::new(a.x_min, a.y_min, a.x_max, a.y_max)
                .map_err(|e| Error::validation(&here, e.to_string()))?;
            match a.class {
                LesionClass::Benign => report.benign_annotations_dropped += 1,
                LesionClass::Malignant => {
                    malignant_breasts.insert(&img.breast_id);
                    if !excluded {
                        lesions.push(LesionAnnotation {
                            lesion_id: a.lesion_id.clone(),
                            image_id: img.image_id.clone(),
                            bbox,
                        });
                    }
                }
            }
        }
        if excluded {
            report.excluded_images += 1;
        } else {
            included_images.push(img);
        }
    }

    let mut breasts = Vec::new();
    for (i, b) in manifest.breasts.iter().enumerate() {
        let id = b.breast_id();
        if malignant_breasts.contains(id.as_str()) && b.label == Label::Negative {
            return Err(Error::validation(
                loc(format!("breasts[{i}]")),
                format!("breast {id} is labeled 0 but has a malignant lesion annotation"),
            ));
        }
        let members: Vec<String> = manifest
            .images
            .iter()
            .filter(|img| img.breast_id == id)
            .map(|img| img.image_id.clone())
            .collect();
        if members.is_empty() {
            return Err(Error::validation(
                loc(format!("breasts[{i}]")),
                format!("breast {id} has no images"),
            ));
        }
        if breast_excluded(b) {
            report.excluded_breasts += 1;
            continue;
        }
        let kept: Vec<String> = members
            .into_iter()
            .filter(|m| !exclusions.contains(m.as_str()))
            .collect();
        if kept.is_empty() {
            report.excluded_breasts += 1;
            continue;
        }
        breasts.push(BreastCase::new(
            b.patient_id.clone(),
            b.laterality,
            kept,
            b.label,
        )?);
    }

    let included: HashSet<&str> = included_images
        .iter()
        .map(|i| i.image_id.as_str())
        .collect();
    let mut kept_detections = ModelDetections::new();
    for (model, dets) in detections {
        let mut kept = Vec::with_capacity(dets.len());
        for (row, d) in dets.into_iter().enumerate() {
            if included.contains(d.image_id()) {
                kept.push(d);
            } else if image_ids.contains(d.image_id()) {
                report.excluded_detections += 1;
            } else {
                return Err(Error::validation(
                    format!("detections of model {model:?}, row {}", row + 1),
                    format!("unknown image_id {:?}", d.image_id()),
                ));
            }
        }
        kept_detections.insert(model, kept);
    }

    if report.excluded_images > 0 {
        log::info!(
            "excluded {} images ({} breasts, {} detections)",
            report.excluded_images,
            report.excluded_breasts,
            report.excluded_detections
        );
    }
    if report.benign_annotations_dropped > 0 {
        log::info!(
            "dropped {} benign annotations",
            report.benign_annotations_dropped
        );
    }

    Ok(Dataset {
        images: included_images
            .into_iter()
            .map(|i| ImageInfo {
                image_id: i.image_id.clone(),
                breast_id: i.breast_id.clone(),
                view: i.view.clone(),
                width: i.width,
                height: i.height,
            })
            .collect(),
        breasts,
        lesions,
        detections: kept_detections,
        report,
    })
}

impl Dataset {
    pub fn model_ids(&self) -> Vec<&str> {
        self.detections.keys().map(String::as_str).collect()
    }

    fn group_by_image<'a>(&self, dets: &'a [Detection]) -> HashMap<&'a str, Vec<Detection>> {
        let mut by_image: HashMap<&str, Vec<Detection>> = HashMap::new();
        for d in dets {
            by_image.entry(d.image_id()).or_default().push(d.clone());
        }
        by_image
    }

    /// Runs NMS per model and image. Output is grouped by image in dataset
    /// order, each group in NMS order.
    pub fn apply_nms(&mut self, cfg: &NmsConfig) -> Result<()> {
        let mut out = ModelDetections::new();
        for (model, dets) in &self.detections {
            let mut by_image = self.group_by_image(dets);
            let mut kept = Vec::with_capacity(dets.len());
            for img in &self.images {
                if let Some(group) = by_image.remove(img.image_id.as_str()) {
                    kept.extend(nms(&group, cfg)?);
                }
            }
            out.insert(model.clone(), kept);
        }
        self.detections = out;
        Ok(())
    }

    /// Image scores of one model, in dataset image order.
    pub fn image_scores(&self, model: &str) -> Result<Vec<ImageScore>> {
        let dets = self
            .detections
            .get(model)
            .ok_or_else(|| Error::InvalidInput(format!("unknown model {model:?}")))?;
        let by_image = self.group_by_image(dets);
        Ok(self
            .images
            .iter()
            .map(|img| {
                let ds = by_image
                    .get(img.image_id.as_str())
                    .map_or(&[][..], Vec::as_slice);
                image_score(img.image_id.clone(), ds)
            })
            .collect())
    }

    /// Per-image mean over models; every image scores 0 when no model is
    /// present.
    pub fn ensemble_image_scores(&self) -> Result<Vec<ImageScore>> {
        let per_model: Vec<Vec<ImageScore>> = self
            .model_ids()
            .into_iter()
            .map(|m| self.image_scores(m))
            .collect::<Result<_>>()?;
        self.images
            .iter()
            .enumerate()
            .map(|(i, img)| {
                let score = if per_model.is_empty() {
                    0.0
                } else {
                    ensemble_score(&per_model.iter().map(|s| s[i].score).collect::<Vec<_>>())?
                };
                Ok(ImageScore {
                    image_id: img.image_id.clone(),
                    score,
                })
            })
            .collect()
    }

    pub fn breast_scores(&self) -> Result<Vec<BreastScore>> {
        let images: HashMap<String, ImageScore> = self
            .ensemble_image_scores()?
            .into_iter()
            .map(|s| (s.image_id.clone(), s))
            .collect();
        self.breasts
            .iter()
            .map(|b| {
                let scores: Vec<ImageScore> =
                    b.image_ids.iter().map(|id| images[id].clone()).collect();
                Ok(BreastScore {
                    breast_id: b.breast_id(),
                    label: b.label,
                    score: breast_score(&scores)?,
                    image_ids: b.image_ids.clone(),
                })
            })
            .collect()
    }

    /// Images with one model's detections and their lesions, for FROC.
    pub fn froc_images(&self, model: Option<&str>) -> Result<Vec<FrocImage>> {
        let dets: &[Detection] = match model {
            Some(m) => self
                .detections
                .get(m)
                .ok_or_else(|| Error::InvalidInput(format!("unknown model {m:?}")))?,
            None => &[],
        };
        let mut by_image = self.group_by_image(dets);
        let mut lesions: HashMap<&str, Vec<LesionAnnotation>> = HashMap::new();
        for l in &self.lesions {
            lesions
                .entry(l.image_id.as_str())
                .or_default()
                .push(l.clone());
        }
        Ok(self
            .images
            .iter()
            .map(|img| FrocImage {
                image_id: img.image_id.clone(),
                detections: by_image.remove(img.image_id.as_str()).unwrap_or_default(),
                lesions: lesions.remove(img.image_id.as_str()).unwrap_or_default(),
            })
            .collect())
    }
}
