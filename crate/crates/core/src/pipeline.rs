//! Whole-dataset evaluation shared by the command line and the server.

use rayon::prelude::*;

use crate::consequence::{consequences, ConsequenceConfig, ConsequenceReport, SceneEval};
use crate::costmatrix::CostMatrix;
use crate::decision::{decide_map, LabelMap};
use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::metrics::{compute_metrics, confusion_counts, ClassCounts, MetricsReport};

/// Applies a cost rule to every image, in dataset order.
pub fn decide_dataset(ds: &Dataset, c: &CostMatrix) -> Result<Vec<LabelMap>> {
    ds.images
        .par_iter()
        .map(|img| decide_map(&img.pmap, c))
        .collect()
}

fn check_len(ds: &Dataset, preds: &[LabelMap]) -> Result<()> {
    if preds.len() != ds.images.len() {
        return Err(Error::DatasetMismatch(format!(
            "{} predictions for {} images",
            preds.len(),
            ds.images.len()
        )));
    }
    Ok(())
}

pub fn dataset_counts(ds: &Dataset, preds: &[LabelMap]) -> Result<ClassCounts> {
    check_len(ds, preds)?;
    let per_image = ds
        .images
        .par_iter()
        .zip(preds)
        .map(|(img, p)| confusion_counts(p, &img.gt, ds.n_classes()))
        .collect::<Result<Vec<_>>>()?;
    let mut total = ClassCounts::new(ds.n_classes());
    for c in &per_image {
        total.merge(c)?;
    }
    Ok(total)
}

pub fn dataset_metrics(ds: &Dataset, preds: &[LabelMap]) -> Result<MetricsReport> {
    Ok(compute_metrics(&dataset_counts(ds, preds)?))
}

pub fn dataset_consequences(
    ds: &Dataset,
    pred_a: &[LabelMap],
    pred_b: &[LabelMap],
    config: &ConsequenceConfig,
) -> Result<ConsequenceReport> {
    check_len(ds, pred_a)?;
    check_len(ds, pred_b)?;
    let scenes: Vec<SceneEval<'_>> = ds
        .images
        .iter()
        .zip(pred_a.iter().zip(pred_b))
        .map(|(img, (a, b))| SceneEval {
            image_id: &img.image_id,
            pred_a: a,
            pred_b: b,
            gt: &img.gt,
            instances: &img.instances,
            records: &img.records,
        })
        .collect();
    consequences(&scenes, config)
}
