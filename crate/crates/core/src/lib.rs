//! Evaluation and postprocessing for lesion-detection CAD systems on
//! mammograms.
//!
//! The pipeline runs detector output through class-wise NMS, collapses it into
//! image and breast scores, and evaluates those with breast-level ROC and
//! lesion-level FROC analysis, both with seeded percentile-bootstrap
//! intervals. [`preprocess`] normalizes raw mammograms before detection.

pub mod bootstrap;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod froc;
pub mod geometry;
pub mod preprocess;
pub mod report;
pub mod roc;
pub mod scoring;
pub mod synth;

pub use error::{Error, Result};
