//! Published group-average cost matrices, as log10 exponents.
//!
//! Rows are predictions, columns true classes, in [`SURVEY_CLASSES`] order.
//! Diagonal values are placeholders and are dropped on load.
//!
//! [`SURVEY_CLASSES`]: super::SURVEY_CLASSES

#![allow(clippy::approx_constant)]

use super::MeanLogCostMatrix;

const PASSENGER: [[f64; 6]; 6] = [
    [0.0, 4.12, 3.97, 3.75, 4.74, 3.97],
    [3.90, 0.0, 2.70, 3.18, 3.42, 3.30],
    [3.34, 2.50, 0.0, 2.70, 3.51, 3.07],
    [2.96, 2.96, 2.76, 0.0, 3.51, 3.13],
    [3.72, 3.00, 3.05, 3.41, 0.0, 3.18],
    [3.41, 3.17, 3.05, 3.41, 3.18, 0.0],
];

const EXTERNAL: [[f64; 6]; 6] = [
    [0.0, 4.42, 4.36, 4.00, 5.51, 4.71],
    [3.71, 0.0, 2.72, 3.06, 3.99, 3.40],
    [3.70, 2.13, 0.0, 2.41, 3.56, 3.46],
    [2.97, 2.46, 2.79, 0.0, 3.70, 3.08],
    [4.03, 3.04, 3.16, 3.40, 0.0, 3.50],
    [3.77, 2.84, 3.14, 3.34, 3.14, 0.0],
];

const FEMALE: [[f64; 6]; 6] = [
    [0.0, 4.45, 4.25, 4.23, 5.65, 4.47],
    [4.03, 0.0, 2.72, 3.32, 4.06, 3.79],
    [3.83, 2.26, 0.0, 2.48, 3.65, 3.36],
    [3.29, 2.92, 2.81, 0.0, 3.84, 3.41],
    [4.14, 3.09, 3.28, 3.54, 0.0, 3.44],
    [4.03, 3.07, 3.23, 3.56, 3.22, 0.0],
];

const MALE: [[f64; 6]; 6] = [
    [0.0, 4.33, 4.03, 3.58, 4.60, 4.17],
    [3.74, 0.0, 2.76, 2.98, 3.39, 3.04],
    [3.33, 2.43, 0.0, 2.64, 3.48, 3.15],
    [2.74, 2.54, 2.76, 0.0, 3.39, 2.88],
    [3.73, 3.02, 3.04, 3.32, 0.0, 3.24],
    [3.30, 2.98, 3.03, 3.24, 3.17, 0.0],
];

/// Named presets accepted by the CLI and HTTP layers.
pub const PRESET_NAMES: [&str; 4] = ["passenger", "external", "female", "male"];

fn load(rows: &[[f64; 6]; 6]) -> MeanLogCostMatrix {
    let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
    MeanLogCostMatrix::from_log10_rows(&rows).expect("published matrices are well formed")
}

pub fn passenger() -> MeanLogCostMatrix {
    load(&PASSENGER)
}

pub fn external() -> MeanLogCostMatrix {
    load(&EXTERNAL)
}

pub fn female() -> MeanLogCostMatrix {
    load(&FEMALE)
}

pub fn male() -> MeanLogCostMatrix {
    load(&MALE)
}

pub fn by_name(name: &str) -> Option<MeanLogCostMatrix> {
    match name {
        "passenger" => Some(passenger()),
        "external" => Some(external()),
        "female" => Some(female()),
        "male" => Some(male()),
        _ => None,
    }
}
