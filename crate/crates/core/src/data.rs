//! Regression data in original units, CSV ingestion and the ground-truth
//! sidecar written for synthetic instances.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the optional 0/1 column marking rows that may never be discarded.
pub const RELIABLE_COLUMN: &str = "reliable";

/// Features and response in original units.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: DMatrix<f64>,
    pub response: DVector<f64>,
    /// Rows exempt from outlier flagging.
    pub reliable: Vec<bool>,
    pub column_names: Vec<String>,
    pub response_name: String,
}

impl Dataset {
    pub fn new(
        features: DMatrix<f64>,
        response: DVector<f64>,
        reliable: Vec<bool>,
        column_names: Vec<String>,
    ) -> Result<Self> {
        let (m, n) = features.shape();
        if m == 0 || n == 0 {
            return Err(Error::InvalidInput(format!("dataset is {m}x{n}; need m, n >= 1")));
        }
        if response.len() != m || reliable.len() != m {
            return Err(Error::InvalidInput(format!(
                "row count mismatch: features {m}, response {}, reliable {}",
                response.len(),
                reliable.len()
            )));
        }
        if column_names.len() != n {
            return Err(Error::InvalidInput(format!(
                "{} column names for {n} feature columns",
                column_names.len()
            )));
        }
        if features.iter().chain(response.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite entry in dataset".into()));
        }
        if reliable.iter().filter(|&&r| r).count() >= m {
            return Err(Error::InvalidInput("every row is marked reliable".into()));
        }
        Ok(Dataset {
            features,
            response,
            reliable,
            column_names,
            response_name: "y".to_string(),
        })
    }

    pub fn with_response_name(mut self, name: impl Into<String>) -> Self {
        self.response_name = name.into();
        self
    }

    pub fn m(&self) -> usize {
        self.features.nrows()
    }

    pub fn n(&self) -> usize {
        self.features.ncols()
    }

    pub fn reliable_count(&self) -> usize {
        self.reliable.iter().filter(|&&r| r).count()
    }

    /// Reads a headered CSV. `response` names the response column; a column
    /// named `reliable` (0/1) is optional; every other column is a feature.
    pub fn from_csv_reader<R: Read>(reader: R, response: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let resp_idx = headers
            .iter()
            .position(|h| h == response)
            .ok_or_else(|| Error::MissingColumn(response.to_string()))?;
        let rel_idx = headers.iter().position(|h| h == RELIABLE_COLUMN);
        let feat_idx: Vec<usize> = (0..headers.len())
            .filter(|&j| j != resp_idx && Some(j) != rel_idx)
            .collect();

        let mut values = Vec::new();
        let mut y = Vec::new();
        let mut reliable = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |j: usize| -> Result<f64> {
                let raw = rec.get(j).unwrap_or("");
                if raw.is_empty() {
                    return Err(Error::InvalidInput(format!(
                        "missing value in row {} column `{}`",
                        row + 1,
                        headers[j]
                    )));
                }
                raw.parse::<f64>().map_err(|_| {
                    Error::InvalidInput(format!(
                        "row {} column `{}`: `{raw}` is not a number",
                        row + 1,
                        headers[j]
                    ))
                })
            };
            for &j in &feat_idx {
                values.push(parse(j)?);
            }
            y.push(parse(resp_idx)?);
            reliable.push(match rel_idx {
                None => false,
                Some(j) => match rec.get(j).unwrap_or("") {
                    "0" => false,
                    "1" => true,
                    other => {
                        return Err(Error::InvalidInput(format!(
                            "row {}: reliable flag must be 0 or 1, got `{other}`",
                            row + 1
                        )))
                    }
                },
            });
        }
        let m = y.len();
        let features = DMatrix::from_row_slice(m, feat_idx.len(), &values);
        let names = feat_idx.iter().map(|&j| headers[j].clone()).collect();
        Ok(Dataset::new(features, DVector::from_vec(y), reliable, names)?
            .with_response_name(response))
    }

    pub fn from_csv_path(path: &Path, response: &str) -> Result<Self> {
        let file = File::open(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_csv_reader(file, response)
    }

    /// Writes features, response and (when any row is reliable) the flag column.
    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let with_flags = self.reliable.iter().any(|&r| r);
        let mut header: Vec<&str> = self.column_names.iter().map(String::as_str).collect();
        header.push(&self.response_name);
        if with_flags {
            header.push(RELIABLE_COLUMN);
        }
        w.write_record(&header)?;
        for i in 0..self.m() {
            let mut rec: Vec<String> =
                self.features.row(i).iter().map(|v| format!("{v}")).collect();
            rec.push(format!("{}", self.response[i]));
            if with_flags {
                rec.push(if self.reliable[i] { "1" } else { "0" }.to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|source| Error::Io {
            path: "<csv writer>".into(),
            source,
        })?;
        Ok(())
    }
}

/// Planted coefficients and corrupted rows of a synthetic instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub x_star: Vec<f64>,
    #[serde(rename = "outliers")]
    pub outlier_set: Vec<usize>,
}

impl GroundTruth {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&s)
    }
}
