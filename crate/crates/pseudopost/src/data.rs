//! Comma-separated microdata with a header row.

use std::collections::HashMap;
use std::path::Path;

use pseudopost_core::model::SurveySample;
use pseudopost_core::{Error, Matrix};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Which header columns feed the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMap {
    pub outcome: String,
    #[serde(default)]
    pub covariates: Vec<String>,
    pub weight: String,
    #[serde(default)]
    pub stratum: Option<String>,
    #[serde(default)]
    pub psu: Option<String>,
    #[serde(default = "yes")]
    pub intercept: bool,
}

fn yes() -> bool {
    true
}

impl ColumnMap {
    /// Whether the design columns needed for replicate adjustment are mapped.
    pub fn has_design(&self) -> bool {
        self.stratum.is_some() || self.psu.is_some()
    }

    pub fn parameter_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.covariates.len() + 1);
        if self.intercept {
            names.push("intercept".to_string());
        }
        names.extend(self.covariates.iter().cloned());
        names
    }

    fn locate(&self, header: &csv::StringRecord, path: &Path) -> Result<Located> {
        let find = |name: &str| -> Result<usize> {
            header.iter().position(|h| h.trim() == name).ok_or_else(|| {
                CliError::Config(format!(
                    "{}: column '{name}' not found (have: {})",
                    path.display(),
                    header.iter().collect::<Vec<_>>().join(", ")
                ))
            })
        };
        if self.covariates.is_empty() && !self.intercept {
            return Err(CliError::Config("model has no covariates and no intercept".into()));
        }
        Ok(Located {
            outcome: find(&self.outcome)?,
            covariates: self.covariates.iter().map(|c| find(c)).collect::<Result<_>>()?,
            weight: find(&self.weight)?,
            stratum: self.stratum.as_deref().map(find).transpose()?,
            psu: self.psu.as_deref().map(find).transpose()?,
        })
    }
}

struct Located {
    outcome: usize,
    covariates: Vec<usize>,
    weight: usize,
    stratum: Option<usize>,
    psu: Option<usize>,
}

/// Dense ids for string labels, in order of first appearance.
#[derive(Default)]
struct Labels(HashMap<String, u32>);

impl Labels {
    fn id(&mut self, label: &str) -> u32 {
        let next = self.0.len() as u32;
        *self.0.entry(label.trim().to_string()).or_insert(next)
    }
}

/// Read `path` into a survey sample. The column map is checked against the
/// header before any row is parsed. Without a PSU column every row is its
/// own PSU; without a stratum column there is one stratum.
pub fn read_microdata(path: &Path, map: &ColumnMap) -> Result<SurveySample> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let cols = map.locate(&header, path)?;

    let d = cols.covariates.len() + usize::from(map.intercept);
    let mut y = Vec::new();
    let mut x = Vec::new();
    let mut weight = Vec::new();
    let mut stratum = Vec::new();
    let mut psu = Vec::new();
    let mut strata = Labels::default();
    let mut psus = Labels::default();

    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(row as u64 + 2, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let number = |i: usize| -> Result<f64> {
            field(i)
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::parse(path, line, format!("column '{}': '{}' is not a finite number", &header[i], field(i))))
        };

        y.push(match field(cols.outcome) {
            "0" | "0.0" => 0u8,
            "1" | "1.0" => 1u8,
            other => {
                return Err(CliError::parse(path, line, format!("outcome '{other}' is not 0 or 1")));
            }
        });
        if map.intercept {
            x.push(1.0);
        }
        for &c in &cols.covariates {
            x.push(number(c)?);
        }
        let w = number(cols.weight)?;
        if w <= 0.0 {
            return Err(Error::InvalidWeight { index: row, value: w }.into());
        }
        weight.push(w);
        stratum.push(cols.stratum.map_or(0, |c| strata.id(field(c))));
        // PSU labels are only unique within a stratum
        psu.push(match cols.psu {
            Some(c) => psus.id(&format!("{}\u{1f}{}", stratum[row], field(c))),
            None => row as u32,
        });
    }
    if y.is_empty() {
        return Err(CliError::parse(path, 2, "no data rows"));
    }
    let n = y.len();
    let sample = SurveySample::new(y, Matrix::from_row_major(n, d, x)?, weight, stratum, psu)?;
    Ok(sample.with_names(map.parameter_names())?)
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::io(path, source),
        other => CliError::parse(path, line, format!("{other:?}")),
    }
}
