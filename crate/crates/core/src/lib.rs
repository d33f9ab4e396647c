//! Cost-aware evaluation of semantic segmentation for automated driving.
//!
//! * [`costmatrix`]: confusion cost matrices aggregated from survey answers.
//! * [`decision`]: Bayes and minimum-expected-cost decision rules.
//! * [`taxonomy`]: fine-to-coarse class reductions.
//! * [`anova`]: two-group F-test on survey answers with permutation p-values.
//! * [`metrics`]: pixel-level IoU, recall and precision.
//! * [`consequence`]: overlooked humans within braking-distance zones.
//! * [`ingest`]: file formats, manifests and synthetic fixtures.
//! * [`pipeline`]: dataset-wide evaluation.

pub mod anova;
pub mod consequence;
pub mod costmatrix;
pub mod decision;
mod error;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
pub mod taxonomy;

pub use error::{Error, Result};
