//! Estimation quality against a planted truth, and the map from standardized
//! solutions back to original units.

use nalgebra::DVector;

use crate::data::GroundTruth;
use crate::error::{Error, Result};
use crate::problem::Solution;
use crate::standardize::StandardizedInstance;

/// `||x* - x_hat||^2 / ||x*||^2`, with `x_hat` in original units.
pub fn risk(x_hat: &DVector<f64>, truth: &GroundTruth) -> Result<f64> {
    if x_hat.len() != truth.x_star.len() {
        return Err(Error::InvalidInput(format!(
            "coefficient length {} vs truth {}",
            x_hat.len(),
            truth.x_star.len()
        )));
    }
    let norm: f64 = truth.x_star.iter().map(|v| v * v).sum();
    if norm == 0.0 {
        return Err(Error::UndefinedMetric("risk with x* = 0"));
    }
    let err: f64 = truth
        .x_star
        .iter()
        .zip(x_hat.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(err / norm)
}

/// Fraction of planted outliers among the flagged rows.
pub fn recall(z_hat: &[bool], truth: &GroundTruth) -> Result<f64> {
    let k = truth.outlier_set.len();
    if k == 0 {
        return Err(Error::UndefinedMetric("recall with no planted outliers"));
    }
    let hits = truth
        .outlier_set
        .iter()
        .filter(|&&i| z_hat.get(i).copied().unwrap_or(false))
        .count();
    Ok(hits as f64 / k as f64)
}

/// Coefficients and intercept in original units.
pub fn unstandardize_solution(sol: &Solution, inst: &StandardizedInstance) -> (DVector<f64>, f64) {
    let ty = inst.transform.response;
    let mut coef = DVector::zeros(sol.x.len());
    let mut offset = sol.intercept;
    for (j, t) in inst.transform.columns.iter().enumerate() {
        coef[j] = ty.scale * sol.x[j] / t.scale;
        offset -= sol.x[j] * t.shift / t.scale;
    }
    (coef, ty.shift + ty.scale * offset)
}
