//! Closed-form convex hulls of a single trimmed quadratic term and the
//! per-row artifacts the conic formulations are assembled from.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{factor_spd, weighted_gram, SpdFactor};
use crate::standardize::StandardizedInstance;

/// Convexification data for one row `(a, c)` under the regularizer share `Q`.
#[derive(Debug, Clone)]
pub struct HullTerm {
    /// Upper-triangular `L^{-1}` with `L_inv' L_inv = Q + aa'`.
    pub l_inv: DMatrix<f64>,
    /// `Q^{-1} a / (1 + s)`.
    pub shift: DVector<f64>,
    /// Perspective weight `d = 1 / (1 + s)`.
    pub weight: f64,
    /// `s = a' Q^{-1} a`.
    pub s: f64,
    pub c: f64,
    pub a: DVector<f64>,
}

/// `x'Qx + (1 - z)(a'x)^2 / (1 + z a'Q^{-1}a)`, the lower envelope of the
/// homogeneous set over `z` in `[0, 1]`.
pub fn envelope_homogeneous(q: &DMatrix<f64>, a: &DVector<f64>, x: &DVector<f64>, z: f64) -> Result<f64> {
    let s = a.dot(&factor_spd(q)?.solve(a));
    let ax = a.dot(x);
    Ok(x.dot(&(q * x)) + (1.0 - z) * ax * ax / (1.0 + z * s))
}

pub fn build_hull_term(q_share: &DMatrix<f64>, a: &DVector<f64>, c: f64) -> Result<HullTerm> {
    let qa = factor_spd(q_share)?.solve(a);
    let s = a.dot(&qa);
    let mut full = q_share.clone();
    full.ger(1.0, a, a, 1.0);
    let l = factor_spd(&full)?;
    Ok(HullTerm {
        l_inv: l.lower().transpose(),
        shift: qa / (1.0 + s),
        weight: 1.0 / (1.0 + s),
        s,
        c,
        a: a.clone(),
    })
}

/// Hull inequality right-hand side at `(x, w, z)`; `+inf` for `z = 0` with
/// `w != 0`.
pub fn hull_term_value(term: &HullTerm, x: &DVector<f64>, w: f64, z: f64) -> f64 {
    let persp = if z > 0.0 {
        term.weight * w * w / z
    } else if w.abs() <= 1e-12 {
        0.0
    } else {
        return f64::INFINITY;
    };
    let v = &term.l_inv * (x - &term.shift * w);
    let c = term.c;
    c * c + 2.0 * c * (w - term.a.dot(x)) + v.norm_squared() + persp
}

/// Largest `delta` keeping the bordered matrix `Q1 - delta e e'` PSD.
pub fn delta_max(q: &DMatrix<f64>, a: &DVector<f64>) -> Result<f64> {
    let s = a.dot(&factor_spd(q)?.solve(a));
    Ok(1.0 / (1.0 + s))
}

/// `[[Q + aa', -a], [-a', 1]]`.
pub fn bordered_q1(q: &DMatrix<f64>, a: &DVector<f64>) -> DMatrix<f64> {
    let n = a.len();
    let mut q1 = DMatrix::zeros(n + 1, n + 1);
    let mut top = q.clone();
    top.ger(1.0, a, a, 1.0);
    q1.view_mut((0, 0), (n, n)).copy_from(&top);
    for j in 0..n {
        q1[(n, j)] = -a[j];
        q1[(j, n)] = -a[j];
    }
    q1[(n, n)] = 1.0;
    q1
}

/// Regularization matrix together with its factor.
#[derive(Debug, Clone)]
pub struct Regularizer {
    pub q_reg: DMatrix<f64>,
    pub factor: SpdFactor,
}

impl Regularizer {
    pub fn new(q_reg: DMatrix<f64>) -> Result<Self> {
        let factor = factor_spd(&q_reg)?;
        Ok(Regularizer { q_reg, factor })
    }
}

/// `lambda T'T` plus the Gram matrix of the reliable rows.
pub fn reliable_regularizer(lambda: f64, t: &DMatrix<f64>, inst: &StandardizedInstance) -> Result<Regularizer> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidInput("lambda must be positive".into()));
    }
    let w: Vec<f64> = inst.reliable.iter().map(|&r| if r { 1.0 } else { 0.0 }).collect();
    Regularizer::new(t.transpose() * t * lambda + weighted_gram(&inst.a, &w))
}

/// A point of the homogeneous-free set `{t >= (c - a'x)^2 (1 - z)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HullPoint {
    pub x: DVector<f64>,
    pub z: f64,
    pub t: f64,
}

impl HullPoint {
    pub fn satisfies(&self, a: &DVector<f64>, c: f64, tol: f64) -> bool {
        let r = c - a.dot(&self.x);
        self.t + tol >= r * r * (1.0 - self.z)
    }
}

/// Writes a fractional `(x, z, t)` as `z * p1 + (1 - z) * p2` with `p1, p2`
/// in the unregularized set, showing its hull is trivial.
pub fn trivial_hull_witness(
    a: &DVector<f64>,
    c: f64,
    x: &DVector<f64>,
    z: f64,
    t: f64,
) -> Result<(HullPoint, HullPoint, f64)> {
    let aa = a.norm_squared();
    if aa == 0.0 {
        return Err(Error::UnsupportedDirection);
    }
    if !(z > 0.0 && z < 1.0) || !(t >= 0.0) {
        return Err(Error::InvalidInput(format!("need 0 < z < 1 and t >= 0, got z={z}, t={t}")));
    }
    let anchor = a * (c / aa);
    let p1 = HullPoint {
        x: x / z - &anchor * ((1.0 - z) / z),
        z: 1.0,
        t: 0.0,
    };
    let p2 = HullPoint {
        x: anchor,
        z: 0.0,
        t: t / (1.0 - z),
    };
    Ok((p1, p2, z))
}
