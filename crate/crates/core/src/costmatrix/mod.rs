//! Confusion cost matrices and their construction from survey answers.
//!
//! Matrices are indexed `(prediction, truth)`: row `k` is the predicted class,
//! column `y` the true class, so `c(drivable, human)` prices predicting
//! "drivable" where a human actually is.
//!
//! Survey answers rate the severity of confusing a highlighted *true* class
//! with each of the other classes. An answer with target `t` therefore fills
//! column `t` of the matrix, one row per confused class.

mod answer;
pub mod published;

pub use answer::{AnswerFilter, AnswerRecord, Gender, Perspective, RawAnswer};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class names of the six-way survey taxonomy, in matrix order.
pub const SURVEY_CLASSES: [&str; 6] = [
    "drivable",
    "nondrivable",
    "static",
    "info",
    "human",
    "dynamic",
];

pub const DRIVABLE: usize = 0;
pub const HUMAN: usize = 4;

/// Highest severity exponent offered by the survey (a cost of 10^6).
pub const MAX_LEVEL: u8 = 6;

/// Non-negative `N x N` confusion costs with an exact zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostMatrix {
    n_classes: usize,
    entries: Vec<f64>,
}

impl CostMatrix {
    /// Builds a matrix from row-major entries, checking every invariant.
    pub fn new(n_classes: usize, entries: Vec<f64>) -> Result<Self> {
        if n_classes == 0 {
            return Err(Error::InvalidSize(0));
        }
        if entries.len() != n_classes * n_classes {
            return Err(Error::shape(
                format!("{} entries", n_classes * n_classes),
                format!("{} entries", entries.len()),
            ));
        }
        for (idx, &value) in entries.iter().enumerate() {
            let (row, col) = (idx / n_classes, idx % n_classes);
            if !value.is_finite() {
                return Err(Error::InvalidCostMatrix(format!(
                    "entry ({row}, {col}) is not finite"
                )));
            }
            if value < 0.0 {
                return Err(Error::InvalidCostMatrix(format!(
                    "entry ({row}, {col}) is negative"
                )));
            }
            if row == col && value != 0.0 {
                return Err(Error::InvalidCostMatrix(format!(
                    "diagonal entry ({row}, {col}) must be 0"
                )));
            }
        }
        Ok(Self { n_classes, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::shape(
                format!("{n} columns"),
                format!("{} columns", bad.len()),
            ));
        }
        Self::new(n, rows.concat())
    }

    /// The all-zero matrix; every class ties, so decisions collapse to class 0.
    pub fn zeros(n_classes: usize) -> Self {
        Self {
            n_classes,
            entries: vec![0.0; n_classes * n_classes],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Cost of predicting `prediction` when `truth` is the true class.
    #[inline]
    pub fn get(&self, prediction: usize, truth: usize) -> f64 {
        self.entries[prediction * self.n_classes + truth]
    }

    #[inline]
    pub fn row(&self, prediction: usize) -> &[f64] {
        let n = self.n_classes;
        &self.entries[prediction * n..(prediction + 1) * n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.entries
            .chunks(self.n_classes)
            .map(<[f64]>::to_vec)
            .collect()
    }

    /// Multiplies every entry by `lambda`.
    pub fn scale(&self, lambda: f64) -> Result<Self> {
        scale(self, lambda)
    }

    /// Restriction to the given classes, in the given order.
    pub fn submatrix(&self, classes: &[usize]) -> Result<Self> {
        if let Some(&bad) = classes.iter().find(|&&c| c >= self.n_classes) {
            return Err(Error::UnknownClass(bad.to_string()));
        }
        let entries = classes
            .iter()
            .flat_map(|&r| classes.iter().map(move |&c| (r, c)))
            .map(|(r, c)| self.get(r, c))
            .collect();
        Self::new(classes.len(), entries)
    }

    /// Log10 view of the off-diagonal entries; zero costs have no exponent.
    pub fn to_log10(&self) -> MeanLogCostMatrix {
        let n = self.n_classes;
        let entries = (0..n * n)
            .map(|idx| {
                let v = self.entries[idx];
                (idx / n != idx % n && v > 0.0).then(|| v.log10())
            })
            .collect();
        MeanLogCostMatrix {
            n_classes: n,
            entries,
            counts: vec![0; n * n],
        }
    }
}

/// The "robot" valuation: every confusion costs 1, the diagonal 0.
pub fn robot_matrix(n: usize) -> Result<CostMatrix> {
    if n < 2 {
        return Err(Error::InvalidSize(n));
    }
    let entries = (0..n * n)
        .map(|idx| if idx / n == idx % n { 0.0 } else { 1.0 })
        .collect();
    CostMatrix::new(n, entries)
}

pub fn scale(c: &CostMatrix, lambda: f64) -> Result<CostMatrix> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::InvalidScale(lambda));
    }
    CostMatrix::new(c.n_classes, c.entries.iter().map(|v| v * lambda).collect())
}

/// Cell-wise mean severity exponents. `None` marks the diagonal and cells
/// that received no answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanLogCostMatrix {
    n_classes: usize,
    entries: Vec<Option<f64>>,
    counts: Vec<u64>,
}

impl MeanLogCostMatrix {
    /// Builds a matrix of known exponents (e.g. a published table). The
    /// diagonal of `rows` is ignored; counts are left at zero.
    pub fn from_log10_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::shape(
                    format!("{n} columns"),
                    format!("{} columns", row.len()),
                ));
            }
            for (c, &v) in row.iter().enumerate() {
                if r == c {
                    entries.push(None);
                } else if !v.is_finite() {
                    return Err(Error::InvalidCostMatrix(format!(
                        "exponent ({r}, {c}) is not finite"
                    )));
                } else {
                    entries.push(Some(v));
                }
            }
        }
        Ok(Self {
            n_classes: n,
            entries,
            counts: vec![0; n * n],
        })
    }

    /// Builds a possibly partial matrix; diagonal entries must be `None`.
    pub fn from_entries(
        n_classes: usize,
        entries: Vec<Option<f64>>,
        counts: Vec<u64>,
    ) -> Result<Self> {
        if entries.len() != n_classes * n_classes || counts.len() != entries.len() {
            return Err(Error::shape(
                format!("{} cells", n_classes * n_classes),
                format!("{} entries / {} counts", entries.len(), counts.len()),
            ));
        }
        for (idx, e) in entries.iter().enumerate() {
            let (r, c) = (idx / n_classes, idx % n_classes);
            match e {
                Some(_) if r == c => {
                    return Err(Error::InvalidCostMatrix(format!(
                        "diagonal cell ({r}, {c}) must be empty"
                    )))
                }
                Some(v) if !v.is_finite() => {
                    return Err(Error::InvalidCostMatrix(format!(
                        "exponent ({r}, {c}) is not finite"
                    )))
                }
                _ => {}
            }
        }
        Ok(Self {
            n_classes,
            entries,
            counts,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Mean exponent for `(prediction, truth)`; `None` on the diagonal or for
    /// an empty cell.
    pub fn get(&self, prediction: usize, truth: usize) -> Option<f64> {
        self.entries[prediction * self.n_classes + truth]
    }

    pub fn count(&self, prediction: usize, truth: usize) -> u64 {
        self.counts[prediction * self.n_classes + truth]
    }

    pub fn entries(&self) -> &[Option<f64>] {
        &self.entries
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn rows(&self) -> Vec<Vec<Option<f64>>> {
        self.entries
            .chunks(self.n_classes)
            .map(<[Option<f64>]>::to_vec)
            .collect()
    }

    /// Off-diagonal cells without any contributing answer.
    pub fn empty_cells(&self) -> Vec<(usize, usize)> {
        let n = self.n_classes;
        (0..n * n)
            .filter(|&idx| idx / n != idx % n && self.entries[idx].is_none())
            .map(|idx| (idx / n, idx % n))
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        self.empty_cells().is_empty()
    }

    pub fn to_linear(&self) -> Result<CostMatrix> {
        to_linear(self)
    }
}

/// Mean severity exponent per cell over the answers accepted by `filter`.
///
/// Averaging happens in exponent space. Cells never rated by the selected
/// answers stay empty; check [`MeanLogCostMatrix::is_complete`].
pub fn aggregate_answers<F>(answers: &[AnswerRecord], filter: F) -> Result<MeanLogCostMatrix>
where
    F: Fn(&AnswerRecord) -> bool,
{
    let (n, sums, counts) = accumulate(answers, &filter, u64::from)?;
    let entries = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| (c > 0).then(|| s as f64 / c as f64))
        .collect();
    Ok(MeanLogCostMatrix {
        n_classes: n,
        entries,
        counts,
    })
}

/// Alternative aggregation that averages linear costs `10^level` instead of
/// exponents. Requires every off-diagonal cell to be covered.
pub fn aggregate_answers_linear<F>(answers: &[AnswerRecord], filter: F) -> Result<CostMatrix>
where
    F: Fn(&AnswerRecord) -> bool,
{
    let (n, sums, counts) = accumulate(answers, &filter, |level| 10u64.pow(u32::from(level)))?;
    let mut entries = vec![0.0; n * n];
    for idx in 0..n * n {
        if idx / n == idx % n {
            continue;
        }
        if counts[idx] == 0 {
            return Err(Error::IncompleteCoverage {
                row: idx / n,
                col: idx % n,
            });
        }
        entries[idx] = sums[idx] as f64 / counts[idx] as f64;
    }
    CostMatrix::new(n, entries)
}

// Integer accumulation keeps the result independent of answer order.
fn accumulate<F, V>(
    answers: &[AnswerRecord],
    filter: &F,
    value: V,
) -> Result<(usize, Vec<u64>, Vec<u64>)>
where
    F: Fn(&AnswerRecord) -> bool,
    V: Fn(u8) -> u64,
{
    let mut selected = answers.iter().filter(|a| filter(a)).peekable();
    let n = selected.peek().ok_or(Error::EmptyGroup)?.n_classes();
    let mut sums = vec![0u64; n * n];
    let mut counts = vec![0u64; n * n];
    for answer in selected {
        if answer.n_classes() != n {
            return Err(Error::shape(
                format!("{n} classes"),
                format!(
                    "{} classes in answer from {}",
                    answer.n_classes(),
                    answer.participant_id
                ),
            ));
        }
        let truth = answer.target();
        for (confused, level) in answer.rated() {
            let idx = confused * n + truth;
            sums[idx] += value(level);
            counts[idx] += 1;
        }
    }
    Ok((n, sums, counts))
}

/// Converts mean exponents to linear costs `10^mean`.
pub fn to_linear(m: &MeanLogCostMatrix) -> Result<CostMatrix> {
    let n = m.n_classes;
    let mut entries = vec![0.0; n * n];
    for (idx, entry) in m.entries.iter().enumerate() {
        let (row, col) = (idx / n, idx % n);
        if row == col {
            continue;
        }
        let exponent = entry.ok_or(Error::IncompleteCoverage { row, col })?;
        entries[idx] = 10f64.powf(exponent);
    }
    CostMatrix::new(n, entries)
}

/// Cell-wise absolute differences of mean exponents, with their sum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffMatrix {
    n_classes: usize,
    entries: Vec<f64>,
    total: f64,
}

impl DiffMatrix {
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn get(&self, prediction: usize, truth: usize) -> f64 {
        self.entries[prediction * self.n_classes + truth]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn total(&self) -> f64 {
        self.total
    }
}

pub fn diff_matrix(a: &MeanLogCostMatrix, b: &MeanLogCostMatrix) -> Result<DiffMatrix> {
    if a.n_classes != b.n_classes {
        return Err(Error::shape(
            format!("{} classes", a.n_classes),
            format!("{} classes", b.n_classes),
        ));
    }
    let n = a.n_classes;
    let mut entries = vec![0.0; n * n];
    for (idx, entry) in entries.iter_mut().enumerate() {
        let (row, col) = (idx / n, idx % n);
        if row == col {
            continue;
        }
        let missing = Error::IncompleteCoverage { row, col };
        match (a.entries[idx], b.entries[idx]) {
            (Some(x), Some(y)) => *entry = (x - y).abs(),
            _ => return Err(missing),
        }
    }
    let total = entries.iter().sum();
    Ok(DiffMatrix {
        n_classes: n,
        entries,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn answer(target: usize, levels: [u8; 6], perspective: Perspective) -> AnswerRecord {
        AnswerRecord::new("p", perspective, "img", target, levels.to_vec()).unwrap()
    }

    #[test]
    fn single_answer_fills_one_column() {
        // target "human" (index 4), all five ratings 4
        let a = answer(4, [4, 4, 4, 4, 0, 4], Perspective::Passenger);
        let m = aggregate_answers(&[a], |_| true).unwrap();
        for pred in 0..6 {
            if pred == 4 {
                assert_eq!(m.get(pred, 4), None);
            } else {
                assert_eq!(m.get(pred, 4), Some(4.0));
                assert_eq!(m.count(pred, 4), 1);
            }
        }
        assert_eq!(m.empty_cells().len(), 25);
        assert!(matches!(
            to_linear(&m),
            Err(Error::IncompleteCoverage { .. })
        ));
    }

    #[test]
    fn two_answers_average_in_exponent_space() {
        let a = answer(0, [0, 3, 3, 3, 3, 3], Perspective::Passenger);
        let b = answer(0, [0, 5, 5, 5, 5, 5], Perspective::External);
        let m = aggregate_answers(&[a, b], |_| true).unwrap();
        for pred in 1..6 {
            assert_eq!(m.get(pred, 0), Some(4.0));
            assert_eq!(m.count(pred, 0), 2);
        }
    }

    #[test]
    fn empty_filter_is_an_error() {
        let a = answer(0, [0, 3, 3, 3, 3, 3], Perspective::Passenger);
        let res = aggregate_answers(&[a], |r| r.perspective == Perspective::External);
        assert!(matches!(res, Err(Error::EmptyGroup)));
    }

    #[test]
    fn linear_mode_averages_costs() {
        let a = answer(0, [0, 3, 3, 3, 3, 3], Perspective::Passenger);
        let b = answer(0, [0, 5, 5, 5, 5, 5], Perspective::External);
        assert!(matches!(
            aggregate_answers_linear(&[a.clone(), b.clone()], |_| true),
            Err(Error::IncompleteCoverage { .. })
        ));
        let mut all = vec![a, b];
        for t in 1..6 {
            let mut levels = [1u8; 6];
            levels[t] = 0;
            all.push(answer(t, levels, Perspective::Passenger));
        }
        let c = aggregate_answers_linear(&all, |_| true).unwrap();
        assert_eq!(c.get(1, 0), (1000.0 + 100_000.0) / 2.0);
        assert_eq!(c.get(0, 1), 10.0);
    }

    #[test]
    fn to_linear_powers_of_ten() {
        let p = published::passenger();
        let c = to_linear(&p).unwrap();
        assert_eq!(c.get(DRIVABLE, HUMAN), 10f64.powf(4.74));
        assert_eq!(c.get(HUMAN, HUMAN), 0.0);
        let e = published::external();
        assert_eq!(
            to_linear(&e).unwrap().get(DRIVABLE, HUMAN),
            10f64.powf(5.51)
        );
        let zero = MeanLogCostMatrix::from_log10_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(to_linear(&zero).unwrap(), robot_matrix(2).unwrap());
    }

    #[test]
    fn robot_matrix_definition() {
        assert_eq!(
            robot_matrix(2).unwrap().to_rows(),
            vec![vec![0.0, 1.0], vec![1.0, 0.0]]
        );
        let six = robot_matrix(6).unwrap();
        assert_eq!(six.as_slice().iter().filter(|&&v| v == 1.0).count(), 30);
        assert!(matches!(robot_matrix(1), Err(Error::InvalidSize(1))));
        assert!(matches!(robot_matrix(0), Err(Error::InvalidSize(0))));
    }

    #[test]
    fn scale_rules() {
        let r = robot_matrix(2).unwrap();
        assert_eq!(
            scale(&r, 3.0).unwrap().to_rows(),
            vec![vec![0.0, 3.0], vec![3.0, 0.0]]
        );
        assert_eq!(scale(&r, 0.0).unwrap(), CostMatrix::zeros(2));
        assert!(matches!(scale(&r, -1.0), Err(Error::InvalidScale(_))));
        assert!(matches!(scale(&r, f64::NAN), Err(Error::InvalidScale(_))));
        assert!(matches!(
            scale(&r, f64::INFINITY),
            Err(Error::InvalidScale(_))
        ));
    }

    #[test]
    fn cost_matrix_invariants_enforced() {
        assert!(CostMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 0.0]]).is_err());
        assert!(CostMatrix::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]).is_err());
        assert!(CostMatrix::from_rows(&[vec![0.0, f64::NAN], vec![1.0, 0.0]]).is_err());
        assert!(CostMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0]]).is_err());
    }

    #[test]
    fn diff_matrix_cases() {
        let p = published::passenger();
        let same = diff_matrix(&p, &p).unwrap();
        assert_eq!(same.total(), 0.0);

        let mut rows = vec![vec![3.0; 6]; 6];
        let b = MeanLogCostMatrix::from_log10_rows(&rows).unwrap();
        rows[0][1] = 4.0;
        let a = MeanLogCostMatrix::from_log10_rows(&rows).unwrap();
        let d = diff_matrix(&a, &b).unwrap();
        assert_eq!(d.get(0, 1), 1.0);
        assert_eq!(d.total(), 1.0);

        let small = MeanLogCostMatrix::from_log10_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(
            diff_matrix(&a, &small),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn survey_vs_robot_dominates_group_differences() {
        let robot = robot_matrix(6).unwrap().to_log10();
        let (p, e) = (published::passenger(), published::external());
        let (f, m) = (published::female(), published::male());
        let pe = diff_matrix(&p, &e).unwrap().total();
        let fm = diff_matrix(&f, &m).unwrap().total();
        for survey in [&p, &e, &f, &m] {
            let vs_robot = diff_matrix(survey, &robot).unwrap().total();
            assert!(vs_robot > pe && vs_robot > fm);
        }
    }

    #[test]
    fn submatrix_picks_classes() {
        let c = to_linear(&published::passenger()).unwrap();
        let s = c.submatrix(&[DRIVABLE, HUMAN]).unwrap();
        assert_eq!(s.get(0, 1), c.get(DRIVABLE, HUMAN));
        assert_eq!(s.get(1, 0), c.get(HUMAN, DRIVABLE));
        assert!(c.submatrix(&[0, 9]).is_err());
    }
}
