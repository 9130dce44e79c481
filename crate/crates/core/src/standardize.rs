//! Centering and scaling to zero column sums and unit column square-sums.

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// `standardized = (original - shift) / scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub shift: f64,
    pub scale: f64,
}

impl Affine {
    pub const IDENTITY: Affine = Affine { shift: 0.0, scale: 1.0 };

    pub fn forward(&self, v: f64) -> f64 {
        (v - self.shift) / self.scale
    }

    pub fn inverse(&self, v: f64) -> f64 {
        v * self.scale + self.shift
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transform {
    pub columns: Vec<Affine>,
    pub response: Affine,
}

/// Data after standardization, with the record needed to map back.
#[derive(Debug, Clone)]
pub struct StandardizedInstance {
    pub a: DMatrix<f64>,
    pub y: DVector<f64>,
    pub transform: Transform,
    pub reliable: Vec<bool>,
    pub column_names: Vec<String>,
}

impl StandardizedInstance {
    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    /// Wraps data that is used as-is, with an identity transform.
    pub fn from_raw(a: DMatrix<f64>, y: DVector<f64>, reliable: Vec<bool>) -> Result<Self> {
        let (m, n) = a.shape();
        if y.len() != m || reliable.len() != m {
            return Err(Error::InvalidInput("row count mismatch".into()));
        }
        Ok(StandardizedInstance {
            a,
            y,
            transform: Transform {
                columns: vec![Affine::IDENTITY; n],
                response: Affine::IDENTITY,
            },
            reliable,
            column_names: (1..=n).map(|j| format!("x{j}")).collect(),
        })
    }
}

fn moments(values: impl Iterator<Item = f64> + Clone, name: &str) -> Result<Affine> {
    let (count, sum) = values.clone().fold((0usize, 0.0), |(c, s), v| (c + 1, s + v));
    let shift = sum / count as f64;
    let ss: f64 = values.map(|v| (v - shift) * (v - shift)).sum();
    let scale = ss.sqrt();
    // Relative test so that tiny-but-varying columns are still accepted.
    if !(scale > 0.0) || scale <= 1e-14 * shift.abs() {
        return Err(Error::DegenerateData {
            column: name.to_string(),
        });
    }
    Ok(Affine { shift, scale })
}

/// Translates and scales every feature column and the response so that each
/// sums to zero and has unit sum of squares.
pub fn standardize(dataset: &Dataset) -> Result<StandardizedInstance> {
    let (m, n) = dataset.features.shape();
    let mut a = dataset.features.clone();
    let mut columns = Vec::with_capacity(n);
    for j in 0..n {
        let col = dataset.features.column(j);
        let t = moments(col.iter().copied(), &dataset.column_names[j])?;
        for i in 0..m {
            a[(i, j)] = t.forward(a[(i, j)]);
        }
        columns.push(t);
    }
    let response = moments(dataset.response.iter().copied(), &dataset.response_name)?;
    let y = dataset.response.map(|v| response.forward(v));
    Ok(StandardizedInstance {
        a,
        y,
        transform: Transform { columns, response },
        reliable: dataset.reliable.clone(),
        column_names: dataset.column_names.clone(),
    })
}
