//! Bayes (argmax) and cost-based (argmin expected cost) decision rules, for
//! single probability vectors and whole per-pixel probability maps.
//!
//! Expected costs are always accumulated in `f64`, even when maps are stored
//! as `f32`. Ties resolve to the lowest class index.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costmatrix::CostMatrix;
use crate::error::{Error, Result};

/// Label value for pixels excluded from decisions and evaluation.
pub const IGNORE: u8 = 255;

/// Accepted deviation of a probability vector's sum from 1.
pub const SUM_TOLERANCE: f64 = 1e-6;
/// Larger deviations up to this bound are renormalized with a warning.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let mut probs = probs;
        match check_simplex(probs.iter().copied())? {
            SimplexCheck::Valid => {}
            SimplexCheck::Drifted(sum) => {
                log::warn!("probability vector sums to {sum}; renormalizing");
                probs.iter_mut().for_each(|p| *p /= sum);
            }
        }
        Ok(Self(probs))
    }

    pub fn n_classes(&self) -> usize {
        self.0.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }
}

enum SimplexCheck {
    Valid,
    Drifted(f64),
}

fn check_simplex(probs: impl Iterator<Item = f64>) -> Result<SimplexCheck> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (k, p) in probs.enumerate() {
        if !p.is_finite() || !(0.0..=1.0 + RENORMALIZE_TOLERANCE).contains(&p) {
            return Err(Error::InvalidProbability(format!(
                "entry {k} = {p} is outside [0, 1]"
            )));
        }
        sum += p;
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidProbability("empty vector".into()));
    }
    let drift = (sum - 1.0).abs();
    if drift <= SUM_TOLERANCE {
        Ok(SimplexCheck::Valid)
    } else if drift <= RENORMALIZE_TOLERANCE {
        Ok(SimplexCheck::Drifted(sum))
    } else {
        Err(Error::InvalidProbability(format!("entries sum to {sum}")))
    }
}

/// `costs[k] = sum_y c(k, y) p(y)`: the expected cost of predicting `k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpectedCostVector(Vec<f64>);

impl ExpectedCostVector {
    pub fn costs(&self) -> &[f64] {
        &self.0
    }

    /// Index of the lowest expected cost.
    pub fn argmin(&self) -> usize {
        argmin(&self.0)
    }
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = k;
        }
    }
    best
}

fn check_classes(p: usize, c: &CostMatrix) -> Result<()> {
    if p != c.n_classes() {
        return Err(Error::shape(
            format!("{} classes (cost matrix)", c.n_classes()),
            format!("{p} classes (probabilities)"),
        ));
    }
    Ok(())
}

pub fn expected_costs(p: &ProbabilityVector, c: &CostMatrix) -> Result<ExpectedCostVector> {
    check_classes(p.n_classes(), c)?;
    let costs = (0..c.n_classes())
        .map(|k| {
            c.row(k)
                .iter()
                .zip(p.probs())
                .map(|(cost, prob)| cost * prob)
                .sum()
        })
        .collect();
    Ok(ExpectedCostVector(costs))
}

/// Cost-based decision: the class with the lowest expected cost.
pub fn decide(p: &ProbabilityVector, c: &CostMatrix) -> Result<usize> {
    check_classes(p.n_classes(), c)?;
    Ok(decide_slice(p.probs().iter().copied(), c))
}

/// Bayes decision: the most probable class.
pub fn bayes_decide(p: &ProbabilityVector) -> usize {
    argmax(p.probs().iter().copied())
}

fn argmax(probs: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_p = f64::NEG_INFINITY;
    for (k, p) in probs.enumerate() {
        if p > best_p {
            best = k;
            best_p = p;
        }
    }
    best
}

// Shared by vector and map paths; `probs` must yield exactly n_classes values.
#[inline]
fn decide_slice(probs: impl Iterator<Item = f64> + Clone, c: &CostMatrix) -> usize {
    let mut best = 0;
    let mut best_cost = f64::INFINITY;
    for k in 0..c.n_classes() {
        let cost: f64 = c
            .row(k)
            .iter()
            .zip(probs.clone())
            .map(|(cost, p)| cost * p)
            .sum();
        if cost < best_cost {
            best = k;
            best_cost = cost;
        }
    }
    best
}

/// `H x W x N` per-pixel class probabilities, row-major with the class index
/// innermost. A pixel whose probabilities are all exactly zero is void and
/// decides to [`IGNORE`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    height: usize,
    width: usize,
    n_classes: usize,
    data: Vec<f32>,
    renormalized: usize,
}

impl ProbabilityMap {
    pub fn new(height: usize, width: usize, n_classes: usize, mut data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || n_classes == 0 {
            return Err(Error::shape(
                "positive dimensions",
                format!("{height}x{width}x{n_classes}"),
            ));
        }
        if data.len() != height * width * n_classes {
            return Err(Error::shape(
                format!("{} values", height * width * n_classes),
                format!("{} values", data.len()),
            ));
        }
        let mut renormalized = 0;
        for (i, px) in data.chunks_mut(n_classes).enumerate() {
            if px.iter().all(|&v| v == 0.0) {
                continue;
            }
            match check_simplex(px.iter().map(|&v| f64::from(v))) {
                Ok(SimplexCheck::Valid) => {}
                Ok(SimplexCheck::Drifted(sum)) => {
                    px.iter_mut()
                        .for_each(|v| *v = (f64::from(*v) / sum) as f32);
                    renormalized += 1;
                }
                Err(e) => {
                    return Err(Error::InvalidProbability(format!(
                        "pixel ({}, {}): {e}",
                        i / width,
                        i % width
                    )))
                }
            }
        }
        if renormalized > 0 {
            log::warn!("renormalized {renormalized} drifting pixels");
        }
        Ok(Self {
            height,
            width,
            n_classes,
            data,
            renormalized,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Probabilities of the pixel with flat index `i = y * width + x`.
    pub fn pixel(&self, i: usize) -> &[f32] {
        &self.data[i * self.n_classes..(i + 1) * self.n_classes]
    }

    pub fn is_void(&self, i: usize) -> bool {
        self.pixel(i).iter().all(|&v| v == 0.0)
    }

    /// Number of pixels renormalized on construction.
    pub fn renormalized_pixels(&self) -> usize {
        self.renormalized
    }
}

/// `H x W` class ids; [`IGNORE`] marks excluded pixels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    height: usize,
    width: usize,
    labels: Vec<u8>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::shape(
                format!("{} labels", height * width),
                format!("{} labels", labels.len()),
            ));
        }
        Ok(Self {
            height,
            width,
            labels,
        })
    }

    pub fn filled(height: usize, width: usize, label: u8) -> Self {
        Self {
            height,
            width,
            labels: vec![label; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [u8] {
        &mut self.labels
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn same_shape(&self, other: &LabelMap) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// Checks that every non-ignore label is a valid class id.
    pub fn check_classes(&self, n_classes: usize) -> Result<()> {
        match self
            .labels
            .iter()
            .find(|&&l| l != IGNORE && usize::from(l) >= n_classes)
        {
            Some(&l) => Err(Error::UnknownClass(l.to_string())),
            None => Ok(()),
        }
    }
}

/// Pixel-wise cost-based decision over a probability map.
pub fn decide_map(pm: &ProbabilityMap, c: &CostMatrix) -> Result<LabelMap> {
    check_classes(pm.n_classes, c)?;
    if c.n_classes() >= usize::from(IGNORE) {
        return Err(Error::InvalidSize(c.n_classes()));
    }
    Ok(map_pixels(pm, |px| {
        decide_slice(px.iter().map(|&v| f64::from(v)), c) as u8
    }))
}

/// Pixel-wise argmax over a probability map.
pub fn argmax_map(pm: &ProbabilityMap) -> LabelMap {
    map_pixels(pm, |px| argmax(px.iter().map(|&v| f64::from(v))) as u8)
}

fn map_pixels<F>(pm: &ProbabilityMap, rule: F) -> LabelMap
where
    F: Fn(&[f32]) -> u8 + Sync,
{
    let n = pm.n_classes;
    let mut labels = vec![IGNORE; pm.n_pixels()];
    labels
        .par_chunks_mut(pm.width)
        .zip(pm.data.par_chunks(pm.width * n))
        .for_each(|(out_row, in_row)| {
            for (out, px) in out_row.iter_mut().zip(in_row.chunks(n)) {
                if px.iter().any(|&v| v != 0.0) {
                    *out = rule(px);
                }
            }
        });
    LabelMap {
        height: pm.height,
        width: pm.width,
        labels,
    }
}
