//! Weight-tuning SDP in the reduced form
//!
//! `min sum_i c_i / u_i  s.t.  Q_eff - sum_i (u_i - 1) a_i a_i' >= 0,  u >= u_floor`
//!
//! solved by a log-det barrier method directly on the p x p LMI. Each Newton
//! step needs `K = A S^{-1} A'` and solves with the k x k Hessian `K o K + D`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::{Fix, NodeState, WeightVector};
use crate::error::{Error, Result};
use crate::linalg::{factor_lower, factor_spd, max_eig_sym, min_eig_sym};
use crate::problem::Design;

/// Coefficients below this are lifted so every `u_i` is still pushed up.
pub const COEF_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SdpOutcome {
    /// Weights for every row; rows that are not free at the node get 0.
    pub weights: WeightVector,
    pub u: Vec<f64>,
    pub objective: f64,
    /// Floor actually enforced; below the requested one when that was
    /// infeasible for the LMI.
    pub u_floor: f64,
    pub floor_lowered: bool,
    /// The PSD check needed bisection toward `u = 1`, or the barrier loop hit
    /// its iteration cap. Running into the deadline is not a warning.
    pub warning: bool,
    pub iterations: usize,
}

struct Lmi<'a> {
    q_eff: DMatrix<f64>,
    af: &'a DMatrix<f64>,
}

impl Lmi<'_> {
    /// `Q_eff - sum_i v_i a_i a_i'` with `v = u - 1`.
    fn matrix(&self, v: &[f64]) -> DMatrix<f64> {
        let mut scaled = self.af.clone();
        for (i, &vi) in v.iter().enumerate() {
            scaled.row_mut(i).scale_mut(vi);
        }
        &self.q_eff - self.af.tr_mul(&scaled)
    }
}

/// Solves the reduced SDP for the free rows of `node` at the point
/// `(z_bar, w_bar)`.
#[allow(clippy::too_many_arguments)]
pub fn solve_weight_sdp(
    design: &Design,
    node: &NodeState,
    z_bar: &DVector<f64>,
    w_bar: &DVector<f64>,
    u_floor: f64,
    tol_psd: f64,
    deadline: Option<Instant>,
) -> Result<SdpOutcome> {
    let m = design.m();
    let p = design.p();
    let free = node.free();
    let k = free.len();
    if k == 0 {
        return Ok(SdpOutcome {
            weights: WeightVector::from_d(vec![0.0; m])?,
            u: vec![],
            objective: 0.0,
            u_floor,
            floor_lowered: false,
            warning: false,
            iterations: 0,
        });
    }
    for &i in &free {
        if design.a.row(i).iter().all(|&v| v == 0.0) {
            return Err(Error::ZeroRow { row: i });
        }
    }
    let af = DMatrix::from_fn(k, p, |i, j| design.a[(free[i], j)]);
    let coef: Vec<f64> = free
        .iter()
        .map(|&i| {
            let z = z_bar[i].clamp(0.0, 1.0);
            let c = if z > 0.0 { w_bar[i] * w_bar[i] * (1.0 / z - 1.0) } else { 0.0 };
            c.max(COEF_FLOOR)
        })
        .collect();

    let mut q_eff = design.q_pen.clone();
    for i in 0..m {
        if node.fix[i] == Fix::Zero {
            let a = design.row(i);
            q_eff.ger(1.0, &a, &a, 1.0);
        }
    }
    let lq = factor_spd(&q_eff)?;
    // largest uniform shift keeping the LMI definite
    let b = lq.lower().clone().solve_lower_triangular(&af.transpose()).expect("nonsingular factor");
    let theta_max = 1.0 / max_eig_sym(&(&b * b.transpose())).max(1e-300);
    // work in v = u - 1 so values near the floor keep their precision
    let floor_v = (u_floor - 1.0).min(0.5 * theta_max);
    let floor_lowered = floor_v < u_floor - 1.0;
    let lmi = Lmi { q_eff, af: &af };

    let objective = |v: &[f64]| -> f64 { coef.iter().zip(v).map(|(c, v)| c / (1.0 + v)).sum() };
    let barrier_value = |t: f64, v: &[f64]| -> Option<f64> {
        if v.iter().any(|&vi| vi <= floor_v) {
            return None;
        }
        let f = factor_lower(&lmi.matrix(v)).ok()?;
        Some(t * objective(v) - f.log_det() - v.iter().map(|&vi| (vi - floor_v).ln()).sum::<f64>())
    };

    let mut v = vec![floor_v + 0.25 * theta_max; k];
    let nu = (p + k) as f64;
    let mut t = nu / objective(&v).max(1e-300);
    let mut iterations = 0;
    let mut capped = false;
    'outer: loop {
        for _ in 0..100 {
            iterations += 1;
            if deadline.is_some_and(|d| Instant::now() >= d) {
                break 'outer;
            }
            if iterations > 1500 {
                capped = true;
                break 'outer;
            }
            let fs = match factor_lower(&lmi.matrix(&v)) {
                Ok(f) => f,
                Err(_) => {
                    capped = true;
                    break 'outer;
                }
            };
            let w = fs.lower().clone().solve_lower_triangular(&af.transpose()).expect("nonsingular");
            let kk = w.tr_mul(&w);
            let mut grad = DVector::zeros(k);
            let mut h = kk.component_mul(&kk);
            for i in 0..k {
                let u = 1.0 + v[i];
                let gap = v[i] - floor_v;
                grad[i] = -t * coef[i] / (u * u) + kk[(i, i)] - 1.0 / gap;
                h[(i, i)] += 2.0 * t * coef[i] / (u * u * u) + 1.0 / (gap * gap);
            }
            let dv = match factor_lower(&h) {
                Ok(fh) => -fh.solve(&grad),
                Err(_) => {
                    let diag = DVector::from_fn(k, |i, _| h[(i, i)].max(1e-300));
                    -grad.component_div(&diag)
                }
            };
            let slope = grad.dot(&dv);
            if !(slope < 0.0) || -slope / 2.0 < 1e-10 {
                break;
            }
            let mut alpha = 1.0f64;
            for i in 0..k {
                if dv[i] < 0.0 {
                    alpha = alpha.min(0.99 * (v[i] - floor_v) / -dv[i]);
                }
            }
            let f0 = barrier_value(t, &v).unwrap_or(f64::INFINITY);
            let mut moved = false;
            for _ in 0..60 {
                let vn: Vec<f64> = (0..k).map(|i| v[i] + alpha * dv[i]).collect();
                if let Some(f1) = barrier_value(t, &vn) {
                    if f1 <= f0 + 1e-4 * alpha * slope {
                        v = vn;
                        moved = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !moved {
                break;
            }
        }
        if nu / t <= 1e-9 * objective(&v) {
            break;
        }
        t *= 10.0;
    }

    // exact PSD check, restoring by bisection toward u = 1 if needed
    let mut warning = capped;
    for _ in 0..60 {
        let s = lmi.matrix(&v);
        let (lo, _) = min_eig_sym(&s);
        if lo >= -tol_psd * s.amax().max(1.0) && factor_lower(&s).is_ok() {
            break;
        }
        warning = true;
        for vi in v.iter_mut() {
            *vi *= 0.5;
        }
    }
    let u: Vec<f64> = v.iter().map(|&vi| 1.0 + vi).collect();
    let mut d = vec![0.0; m];
    for (j, &i) in free.iter().enumerate() {
        d[i] = v[j] / (1.0 + v[j]);
    }
    Ok(SdpOutcome {
        weights: WeightVector::from_d(d)?,
        objective: objective(&v),
        u,
        u_floor: 1.0 + floor_v,
        floor_lowered,
        warning,
        iterations,
    })
}
