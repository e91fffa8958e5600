//! Image, breast and ensemble scores.
//!
//! An image is described by the highest malignant detection score on it, a
//! breast by the mean of its image scores, and an ensemble of models by the
//! mean of the per-model image scores. Ensembling happens at image level,
//! before breast aggregation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Detection;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub image_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Laterality {
    #[serde(rename = "L")]
    Left,
    #[serde(rename = "R")]
    Right,
}

impl fmt::Display for Laterality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Laterality::Left => "L",
            Laterality::Right => "R",
        })
    }
}

impl FromStr for Laterality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "L" => Ok(Laterality::Left),
            "R" => Ok(Laterality::Right),
            other => Err(Error::InvalidInput(format!(
                "laterality must be \"L\" or \"R\", got {other:?}"
            ))),
        }
    }
}

/// Binary breast-level outcome. Serialized as `0` / `1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Label {
    Negative,
    Malignant,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Malignant
    }
}

impl TryFrom<u8> for Label {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Label::Negative),
            1 => Ok(Label::Malignant),
            other => Err(Error::InvalidInput(format!(
                "label must be 0 or 1, got {other}"
            ))),
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        match l {
            Label::Negative => 0,
            Label::Malignant => 1,
        }
    }
}

/// One laterality of one patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreastCase {
    pub patient_id: String,
    pub laterality: Laterality,
    pub image_ids: Vec<String>,
    pub label: Label,
}

impl BreastCase {
    pub fn new(
        patient_id: impl Into<String>,
        laterality: Laterality,
        image_ids: Vec<String>,
        label: Label,
    ) -> Result<Self> {
        let patient_id = patient_id.into();
        if patient_id.is_empty() {
            return Err(Error::InvalidInput("breast case needs a patient id".into()));
        }
        if image_ids.is_empty() {
            return Err(Error::InvalidInput(format!(
                "breast {patient_id}-{laterality} has no images"
            )));
        }
        Ok(BreastCase {
            patient_id,
            laterality,
            image_ids,
            label,
        })
    }

    /// `"<patient>-<L|R>"`.
    pub fn breast_id(&self) -> String {
        format!("{}-{}", self.patient_id, self.laterality)
    }
}

/// Maximum malignant score; `0.0` when the image has no malignant detection.
pub fn image_score(image_id: impl Into<String>, detections: &[Detection]) -> ImageScore {
    let score = detections
        .iter()
        .filter(|d| d.is_malignant())
        .map(Detection::score)
        .fold(0.0, f64::max);
    ImageScore {
        image_id: image_id.into(),
        score,
    }
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len() as f64;
    values.sum::<f64>() / n
}

/// Arithmetic mean of the image scores of one breast.
pub fn breast_score(image_scores: &[ImageScore]) -> Result<f64> {
    if image_scores.is_empty() {
        return Err(Error::InvalidInput(
            "breast score needs at least one image".into(),
        ));
    }
    Ok(mean(image_scores.iter().map(|s| s.score)))
}

/// Arithmetic mean of one image's scores across models.
pub fn ensemble_score(per_model_scores: &[f64]) -> Result<f64> {
    if per_model_scores.is_empty() {
        return Err(Error::InvalidInput(
            "ensemble score needs at least one model".into(),
        ));
    }
    if let Some(bad) = per_model_scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::InvalidInput(format!(
            "model scores must lie in [0, 1], got {bad}"
        )));
    }
    Ok(mean(per_model_scores.iter().copied()))
}
