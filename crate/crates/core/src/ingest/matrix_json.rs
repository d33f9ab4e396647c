//! JSON form of a cost matrix, in log10 exponents or linear costs.
//!
//! ```json
//! {"n_classes": 6, "space": "log10", "class_names": [...],
//!  "entries": [[null, 2.5, ...], ...], "counts": [[0, 40, ...], ...]}
//! ```
//!
//! Rows are predictions, columns true classes. Diagonal entries are `null`
//! in log10 space and `0` in linear space.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::costmatrix::{CostMatrix, MeanLogCostMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixSpace {
    Log10,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixFile {
    pub n_classes: usize,
    pub space: MatrixSpace,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_names: Option<Vec<String>>,
    pub entries: Vec<Vec<Option<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<Vec<Vec<u64>>>,
}

impl MatrixFile {
    pub fn from_log(m: &MeanLogCostMatrix, class_names: Option<Vec<String>>) -> Self {
        let n = m.n_classes();
        Self {
            n_classes: n,
            space: MatrixSpace::Log10,
            class_names,
            entries: m.rows(),
            counts: Some(m.counts().chunks(n).map(<[u64]>::to_vec).collect()),
        }
    }

    pub fn from_linear(c: &CostMatrix, class_names: Option<Vec<String>>) -> Self {
        Self {
            n_classes: c.n_classes(),
            space: MatrixSpace::Linear,
            class_names,
            entries: c
                .to_rows()
                .into_iter()
                .map(|r| r.into_iter().map(Some).collect())
                .collect(),
            counts: None,
        }
    }

    fn check_shape(&self, location: &str) -> Result<()> {
        let n = self.n_classes;
        if n < 2 {
            return Err(Error::schema(
                location,
                "n_classes",
                format!("{n} is below 2"),
            ));
        }
        if self.entries.len() != n {
            return Err(Error::schema(
                location,
                "entries",
                format!("{} rows, expected {n}", self.entries.len()),
            ));
        }
        if let Some(i) = self.entries.iter().position(|r| r.len() != n) {
            return Err(Error::schema(
                location,
                format!("entries[{i}]"),
                format!("expected {n} columns"),
            ));
        }
        if let Some(names) = &self.class_names {
            if names.len() != n {
                return Err(Error::schema(
                    location,
                    "class_names",
                    format!("{} names, expected {n}", names.len()),
                ));
            }
        }
        if let Some(counts) = &self.counts {
            if counts.len() != n || counts.iter().any(|r| r.len() != n) {
                return Err(Error::schema(
                    location,
                    "counts",
                    format!("expected {n}x{n}"),
                ));
            }
        }
        for (i, row) in self.entries.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let field = || format!("entries[{i}][{j}]");
                match (i == j, v, self.space) {
                    (true, Some(_), MatrixSpace::Log10) => {
                        return Err(Error::schema(
                            location,
                            field(),
                            "diagonal must be null in log10 space",
                        ));
                    }
                    (true, Some(v), MatrixSpace::Linear) if *v != 0.0 => {
                        return Err(Error::schema(location, field(), "diagonal must be 0"));
                    }
                    (false, Some(v), _) if !v.is_finite() => {
                        return Err(Error::schema(location, field(), "not a finite number"));
                    }
                    (false, Some(v), MatrixSpace::Linear) if *v < 0.0 => {
                        return Err(Error::schema(location, field(), "negative cost"));
                    }
                    (false, None, MatrixSpace::Linear) => {
                        return Err(Error::schema(location, field(), "missing cost"));
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// Linear costs ready for decisions; log10 entries are exponentiated and
    /// must all be present.
    pub fn to_cost_matrix(&self, location: &str) -> Result<CostMatrix> {
        self.check_shape(location)?;
        match self.space {
            MatrixSpace::Log10 => self.to_log_matrix(location)?.to_linear(),
            MatrixSpace::Linear => CostMatrix::from_rows(
                &self
                    .entries
                    .iter()
                    .map(|r| r.iter().map(|v| v.unwrap_or(0.0)).collect())
                    .collect::<Vec<_>>(),
            ),
        }
    }

    /// Exponent form. Linear files are converted with `log10`; zero
    /// off-diagonal costs have no exponent and are rejected.
    pub fn to_log_matrix(&self, location: &str) -> Result<MeanLogCostMatrix> {
        self.check_shape(location)?;
        let n = self.n_classes;
        let counts = match &self.counts {
            Some(c) => c.concat(),
            None => vec![0; n * n],
        };
        let mut entries = Vec::with_capacity(n * n);
        for (i, row) in self.entries.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                entries.push(match (i == j, self.space) {
                    (true, _) => None,
                    (false, MatrixSpace::Log10) => *v,
                    (false, MatrixSpace::Linear) => {
                        let v = v.unwrap_or(0.0);
                        if v <= 0.0 {
                            return Err(Error::schema(
                                location,
                                format!("entries[{i}][{j}]"),
                                "zero cost has no log10 exponent",
                            ));
                        }
                        Some(v.log10())
                    }
                });
            }
        }
        MeanLogCostMatrix::from_entries(n, entries, counts)
    }
}

pub fn parse_matrix(text: &str, location: &str) -> Result<MatrixFile> {
    let file: MatrixFile = serde_json::from_str(text).map_err(|e| Error::Json {
        path: location.to_string(),
        source: e,
    })?;
    file.check_shape(location)?;
    Ok(file)
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<MatrixFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix(&text, &path.display().to_string())
}

pub fn write_matrix(path: impl AsRef<Path>, m: &MatrixFile) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(m).map_err(|e| Error::Json {
        path: path.display().to_string(),
        source: e,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
