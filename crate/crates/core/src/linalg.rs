//! Dense symmetric kernels: Cholesky, SPD solves, the minimum eigenpair and
//! rank-one inverse updates.
//!
//! Everything here is dense. Instances have at most a few thousand rows and a
//! few dozen columns, and the matrices factored inside the solvers are the
//! small `p x p` normal matrices, so cubic kernels are fine.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor `L` with `L L^T = S`.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    l: DMatrix<f64>,
}

impl SpdFactor {
    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// Solves `S x = b` by forward then backward substitution.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.solve_in_place(x.as_mut_slice());
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(x.len(), n);
        let l = &self.l;
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= l[(i, k)] * x[k];
            }
            x[i] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= l[(k, i)] * x[k];
            }
            x[i] = s / l[(i, i)];
        }
    }

    /// Solves `S X = B` column by column.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        for mut col in x.column_iter_mut() {
            self.solve_in_place(col.as_mut_slice());
        }
        x
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.solve_matrix(&DMatrix::identity(self.dim(), self.dim()))
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.l * self.l.transpose()
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }
}

fn asymmetry(s: &DMatrix<f64>) -> f64 {
    let norm = s.norm().max(f64::MIN_POSITIVE);
    (s - s.transpose()).norm() / norm
}

/// Cholesky factorization of a symmetric positive definite matrix.
pub fn factor_spd(s: &DMatrix<f64>) -> Result<SpdFactor> {
    if !s.is_square() {
        return Err(Error::InvalidInput(format!(
            "cannot factor a {}x{} matrix",
            s.nrows(),
            s.ncols()
        )));
    }
    let asym = asymmetry(s);
    if asym > 1e-10 {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    factor_lower(s)
}

/// Cholesky reading only the lower triangle; used on hot paths where the
/// input is symmetric by construction.
pub(crate) fn factor_lower(s: &DMatrix<f64>) -> Result<SpdFactor> {
    let n = s.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = s[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let mut v = s[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / djj;
        }
    }
    Ok(SpdFactor { l })
}

/// Solves `S x = b` given the factor of `S`.
pub fn solve_spd(f: &SpdFactor, b: &DVector<f64>) -> DVector<f64> {
    f.solve(b)
}

/// Smallest eigenvalue of a symmetric matrix and a unit eigenvector for it.
pub fn min_eig_sym(s: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let eig = SymmetricEigen::new(s.clone());
    let (idx, &val) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("empty matrix has no eigenvalues");
    let v = eig.eigenvectors.column(idx).into_owned();
    (val, v)
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eig_sym(s: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(s.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `(Q + sign * a a^T)^{-1}` from `Q^{-1}` via Sherman-Morrison.
pub fn sherman_morrison_inverse(
    q_inv: &DMatrix<f64>,
    a: &DVector<f64>,
    sign: f64,
) -> Result<DMatrix<f64>> {
    if sign != 1.0 && sign != -1.0 {
        return Err(Error::InvalidInput(format!("sign must be +1 or -1, got {sign}")));
    }
    let qa = q_inv * a;
    let denom = 1.0 + sign * a.dot(&qa);
    if denom <= 1e-12 {
        return Err(Error::SingularUpdate { denominator: denom });
    }
    Ok(q_inv - (&qa * qa.transpose()) * (sign / denom))
}

/// `A^T Diag(weights) A` for a row-major view of the data: rows of `a` are
/// observations.
pub(crate) fn weighted_gram(a: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    let mut scaled = a.clone();
    for (i, &w) in weights.iter().enumerate() {
        scaled.row_mut(i).scale_mut(w);
    }
    scaled.tr_mul(a)
}
