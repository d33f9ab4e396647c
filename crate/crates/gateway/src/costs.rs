//! Resolving `--costs`-style rule specifications.
//!
//! A rule is `robot`, `preset:<name>` (one of the published group matrices),
//! a path to a matrix JSON file, or, where predictions are accepted, a
//! directory of `<image_id>.lmap` files.

use std::path::Path;

use costsight_core::costmatrix::{published, robot_matrix, CostMatrix};
use costsight_core::decision::LabelMap;
use costsight_core::ingest::{read_lmap, read_matrix, Dataset};
use costsight_core::pipeline::decide_dataset;
use costsight_core::{Error, Result};

pub fn cost_matrix(spec: &str, n_classes: usize) -> Result<CostMatrix> {
    let c = if spec == "robot" {
        robot_matrix(n_classes)?
    } else if let Some(name) = spec.strip_prefix("preset:") {
        published::by_name(name)
            .ok_or_else(|| {
                Error::InvalidCostMatrix(format!(
                    "unknown preset {name:?}; expected one of {}",
                    published::PRESET_NAMES.join(", ")
                ))
            })?
            .to_linear()?
    } else {
        read_matrix(spec)?.to_cost_matrix(spec)?
    };
    if c.n_classes() != n_classes {
        return Err(Error::InvalidCostMatrix(format!(
            "{spec}: {} classes, data has {n_classes}",
            c.n_classes()
        )));
    }
    Ok(c)
}

/// Label maps for every dataset image, decided from a cost rule or read
/// from a prediction directory.
pub fn predictions(spec: &str, ds: &Dataset) -> Result<Vec<LabelMap>> {
    let path = Path::new(spec);
    if path.is_dir() {
        return ds
            .images
            .iter()
            .map(|img| read_lmap(path.join(format!("{}.lmap", img.image_id))))
            .collect();
    }
    decide_dataset(ds, &cost_matrix(spec, ds.n_classes())?)
}

/// Short display name for a rule spec.
pub fn rule_name(spec: &str) -> String {
    if let Some(name) = spec.strip_prefix("preset:") {
        return name.to_string();
    }
    let path = Path::new(spec);
    if spec == "robot" || !path.exists() {
        return spec.to_string();
    }
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| spec.to_string())
}
