//! Continuous relaxations of the trimmed problem at a branch-and-bound node,
//! the weight-tuning SDP and the primal-dual tuning loop built on them.

mod bigm;
mod perspective;
mod sdp;
mod tune;
mod zstep;

pub use bigm::{bigm_value, solve_bigm_relaxation};
pub use perspective::{perspective_weight, solve_perspective_relaxation};
pub use sdp::{solve_weight_sdp, SdpOutcome};
pub use tune::{round_heuristic, tune_conic_plus, tune_weights, TuneOutcome, TuneParams};
pub use zstep::{z_step, ZStep};

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{factor_spd, min_eig_sym, weighted_gram};
use crate::problem::Design;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fix {
    Free,
    /// Kept (z = 0).
    Zero,
    /// Discarded (z = 1).
    One,
}

/// Fixings of the discard indicators at a branch-and-bound node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeState {
    pub fix: Vec<Fix>,
    pub remaining_budget: usize,
}

impl NodeState {
    /// Reliable rows fixed to zero, everything else free.
    pub fn root(design: &Design) -> Self {
        NodeState {
            fix: design
                .reliable
                .iter()
                .map(|&r| if r { Fix::Zero } else { Fix::Free })
                .collect(),
            remaining_budget: design.budget,
        }
    }

    pub fn m(&self) -> usize {
        self.fix.len()
    }

    fn indices(&self, f: Fix) -> Vec<usize> {
        (0..self.m()).filter(|&i| self.fix[i] == f).collect()
    }

    pub fn fixed_zero(&self) -> Vec<usize> {
        self.indices(Fix::Zero)
    }

    pub fn fixed_one(&self) -> Vec<usize> {
        self.indices(Fix::One)
    }

    pub fn free(&self) -> Vec<usize> {
        self.indices(Fix::Free)
    }

    pub fn free_count(&self) -> usize {
        self.fix.iter().filter(|&&f| f == Fix::Free).count()
    }

    /// The child with `z_i` fixed; `None` when fixing to one exceeds the budget.
    pub fn child(&self, i: usize, one: bool) -> Option<NodeState> {
        debug_assert_eq!(self.fix[i], Fix::Free);
        let mut c = self.clone();
        if one {
            if self.remaining_budget == 0 {
                return None;
            }
            c.fix[i] = Fix::One;
            c.remaining_budget -= 1;
        } else {
            c.fix[i] = Fix::Zero;
        }
        Some(c)
    }

    /// Whether the relaxation is already integral: nothing left to discard or
    /// every free row can be discarded.
    pub fn is_leaf(&self) -> bool {
        self.remaining_budget == 0 || self.free_count() <= self.remaining_budget
    }

    /// Discard flags of the leaf completion.
    pub fn leaf_flags(&self) -> Vec<bool> {
        let all_free = self.remaining_budget > 0;
        self.fix
            .iter()
            .map(|&f| f == Fix::One || (all_free && f == Fix::Free))
            .collect()
    }
}

/// Perspective weights `d` and their image `u = 1/(1 - d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub d: Vec<f64>,
}

impl WeightVector {
    pub fn from_d(d: Vec<f64>) -> Result<Self> {
        if let Some(i) = d.iter().position(|&v| !(0.0..1.0).contains(&v)) {
            return Err(Error::InvalidWeights(format!("d[{i}] = {} outside [0, 1)", d[i])));
        }
        Ok(WeightVector { d })
    }

    pub fn from_u(u: &[f64]) -> Result<Self> {
        Self::from_d(u.iter().map(|&ui| 1.0 - 1.0 / ui).collect())
    }

    pub fn u(&self) -> Vec<f64> {
        self.d.iter().map(|&d| 1.0 / (1.0 - d)).collect()
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    /// `Q_eff - A_F' Diag(u - 1) A_F` with `Q_eff = Q_pen + Gram(kept rows)`:
    /// the Schur complement of the `(x, w_F)` Hessian.
    pub fn schur(&self, design: &Design, node: &NodeState) -> DMatrix<f64> {
        let w: Vec<f64> = (0..design.m())
            .map(|i| match node.fix[i] {
                Fix::Zero => 1.0,
                Fix::One => 0.0,
                Fix::Free => -self.d[i] / (1.0 - self.d[i]),
            })
            .collect();
        &design.q_pen + weighted_gram(&design.a, &w)
    }

    /// Smallest eigenvalue of the Schur complement relative to its norm
    /// scale; nonnegative exactly when the relaxation is convex.
    pub fn psd_margin(&self, design: &Design, node: &NodeState) -> f64 {
        let s = self.schur(design, node);
        let scale = s.norm().max(1e-300);
        min_eig_sym(&s).0 / scale
    }

    /// Rejects weights whose relaxation would not be convex.
    pub fn check(&self, design: &Design, node: &NodeState, tol: f64) -> Result<()> {
        if self.len() != design.m() {
            return Err(Error::InvalidWeights(format!(
                "{} weights for {} rows",
                self.len(),
                design.m()
            )));
        }
        let margin = self.psd_margin(design, node);
        if margin < -tol {
            return Err(Error::InvalidWeights(format!(
                "Schur complement has relative min eigenvalue {margin:e}"
            )));
        }
        Ok(())
    }
}

/// Weights of the simple conic formulation: each row gets the share
/// `Q_reg / m_free` of the regularizer, `d_i = 1/(1 + a_i'(Q_reg/m_free)^{-1} a_i)`.
/// Reliable rows carry `d = 0`.
pub fn initial_weights(design: &Design) -> Result<WeightVector> {
    let share = design.q_reg() / design.free_rows() as f64;
    let f = factor_spd(&share)?;
    let d = (0..design.m())
        .map(|i| {
            if design.reliable[i] {
                0.0
            } else {
                let a = design.row(i);
                1.0 / (1.0 + a.dot(&f.solve(&a)))
            }
        })
        .collect();
    WeightVector::from_d(d)
}

/// `||y + w - Ax||^2 + x'Q_pen x + sum_i d_i w_i^2 (1/z_i - 1)`, which is the
/// relaxation objective with `Sigma` expanded; `+inf` if `z_i = 0`, `w_i != 0`.
pub fn objective_generic(
    d: &WeightVector,
    x: &DVector<f64>,
    z: &DVector<f64>,
    w: &DVector<f64>,
    design: &Design,
) -> f64 {
    let mut total = x.dot(&(&design.q_pen * x));
    let r = design.residuals(x);
    for i in 0..design.m() {
        let e = r[i] + w[i];
        total += e * e;
        if w[i] != 0.0 {
            if z[i] <= 0.0 {
                if w[i].abs() > 1e-12 {
                    return f64::INFINITY;
                }
            } else {
                total += d.d[i] * w[i] * w[i] * (1.0 / z[i] - 1.0);
            }
        }
    }
    total
}

/// Output of a node relaxation.
#[derive(Debug, Clone)]
pub struct RelaxationResult {
    pub x: DVector<f64>,
    pub z: DVector<f64>,
    pub w: DVector<f64>,
    pub value: f64,
    /// A valid lower bound on the node relaxation, hence on every integer
    /// completion of the node.
    pub certified_lb: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Accuracy and early-exit settings shared by the relaxation solvers.
#[derive(Debug, Clone, Copy)]
pub struct RelaxControl {
    /// Stop once `value - certified_lb <= rel_tol * max(|value|, abs_floor)`.
    pub rel_tol: f64,
    pub abs_floor: f64,
    /// Stop as soon as the certificate reaches this value.
    pub cutoff: f64,
    pub z_floor: f64,
    pub deadline: Option<Instant>,
    pub max_iters: usize,
}

impl Default for RelaxControl {
    fn default() -> Self {
        RelaxControl {
            rel_tol: 1e-9,
            abs_floor: 1e-12,
            cutoff: f64::INFINITY,
            z_floor: 1e-9,
            deadline: None,
            max_iters: 400,
        }
    }
}

impl RelaxControl {
    pub(crate) fn expired(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }

    pub(crate) fn done(&self, value: f64, lb: f64) -> bool {
        lb >= self.cutoff || value - lb <= self.rel_tol * value.abs().max(self.abs_floor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{InterceptMode, Method, ProblemSpec};
    use crate::standardize::StandardizedInstance;

    pub(crate) fn random_design(m: usize, n: usize, lambda: f64, budget: usize, seed: u64) -> Design {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
        let inst = StandardizedInstance::from_raw(a, y, vec![false; m]).unwrap();
        let spec = ProblemSpec::new(Method::Conic, lambda, budget).with_intercept(InterceptMode::Zero);
        Design::new(&inst, &spec).unwrap()
    }

    #[test]
    fn node_partition_and_children() {
        let mut d = random_design(5, 2, 0.1, 2, 1);
        d.reliable[4] = true;
        let root = NodeState::root(&d);
        assert_eq!(root.fixed_zero(), vec![4]);
        assert_eq!(root.free().len(), 4);
        let c = root.child(0, true).unwrap().child(1, true).unwrap();
        assert_eq!(c.remaining_budget, 0);
        assert!(c.child(2, true).is_none());
        assert!(c.is_leaf());
        assert_eq!(c.leaf_flags(), vec![true, true, false, false, false]);
        let z = root.child(0, false).unwrap();
        assert_eq!(z.fixed_zero(), vec![0, 4]);
    }

    #[test]
    fn initial_weights_half_when_lambda_is_m() {
        // unit-norm rows, lambda = m: d = 1/(1 + |a|^2) = 1/2
        let m = 4;
        let a = DMatrix::from_row_slice(m, 2, &[1.0, 0.0, 0.0, 1.0, 0.6, 0.8, -0.8, 0.6]);
        let inst = StandardizedInstance::from_raw(a, DVector::zeros(m), vec![false; m]).unwrap();
        let spec = ProblemSpec::new(Method::ConicPlus, m as f64, 1).with_intercept(InterceptMode::Zero);
        let design = Design::new(&inst, &spec).unwrap();
        let w = initial_weights(&design).unwrap();
        for d in &w.d {
            assert!((d - 0.5).abs() < 1e-14);
        }
        w.check(&design, &NodeState::root(&design), 1e-10).unwrap();
    }

    #[test]
    fn initial_weights_are_psd_valid() {
        for seed in 0..20 {
            let design = random_design(12, 3, 0.05 + 0.1 * seed as f64, 3, seed);
            let w = initial_weights(&design).unwrap();
            assert!(w.psd_margin(&design, &NodeState::root(&design)) >= -1e-12);
        }
    }

    #[test]
    fn generic_objective_at_binary_z_is_lts() {
        let design = random_design(6, 2, 0.3, 2, 4);
        let d = initial_weights(&design).unwrap();
        let x = DVector::from_vec(vec![0.4, -0.7]);
        let r = design.residuals(&x);
        let flags = [true, false, false, true, false, false];
        let z = DVector::from_fn(6, |i, _| if flags[i] { 1.0 } else { 0.0 });
        let w = DVector::from_fn(6, |i, _| if flags[i] { -r[i] } else { 0.0 });
        let g = objective_generic(&d, &x, &z, &w, &design);
        assert!((g - design.objective(&x, &flags)).abs() < 1e-12);
        // substitution x = 0, w = -y, z = 1
        let g0 = objective_generic(
            &d,
            &DVector::zeros(2),
            &DVector::from_element(6, 1.0),
            &(-&design.y),
            &design,
        );
        assert!(g0.abs() < 1e-14);
        let mut z_bad = z.clone();
        z_bad[0] = 0.0;
        assert_eq!(objective_generic(&d, &x, &z_bad, &w, &design), f64::INFINITY);
    }

    #[test]
    fn weight_vector_rejects_out_of_range() {
        assert!(WeightVector::from_d(vec![0.2, 1.0]).is_err());
        assert!(WeightVector::from_d(vec![-0.1]).is_err());
        let w = WeightVector::from_u(&[2.0, 4.0]).unwrap();
        assert_eq!(w.d, vec![0.5, 0.75]);
    }
}
