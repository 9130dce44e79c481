//! Big-M relaxation at a node.
//!
//! For fixed x the best `(z, w)` with `|w_i| <= M z_i` is a water-filling
//! over the hinge residuals: `z_i = clamp((|r_i| - t)/M, 0, 1)` with the
//! smallest level `t >= 0` meeting the budget. The resulting value function
//! `psi(x)` is convex piecewise quadratic and is minimized by generalized
//! Newton steps. It is at least `2 lambda_min(Q + A0'A0)`-strongly convex,
//! which turns any iterate into a certified bound.

use nalgebra::DVector;

use super::{Fix, NodeState, RelaxControl, RelaxationResult};
use crate::error::Result;
use crate::linalg::{factor_lower, min_eig_sym};
use crate::problem::Design;

/// Per-row outcome of the inner water-filling.
struct Fill {
    z: DVector<f64>,
    /// Signed residual left after absorption.
    e: DVector<f64>,
    /// Rows sitting at the level (neither 0 nor 1) while the budget binds.
    at_level: Vec<usize>,
}

/// Smallest `t >= 0` with `sum clamp((v_i - t)/M, 0, 1) <= budget`.
fn water_level(v: &[f64], big_m: f64, budget: f64) -> f64 {
    let f = |t: f64| -> f64 { v.iter().map(|&vi| ((vi - t) / big_m).clamp(0.0, 1.0)).sum() };
    if f(0.0) <= budget {
        return 0.0;
    }
    let mut events: Vec<f64> = Vec::with_capacity(2 * v.len());
    for &vi in v {
        if vi > 0.0 {
            events.push(vi);
        }
        if vi - big_m > 0.0 {
            events.push(vi - big_m);
        }
    }
    events.sort_by(f64::total_cmp);
    events.dedup();
    let mut lo = 0.0;
    let mut f_lo = f(0.0);
    for &t in &events {
        let f_t = f(t);
        if f_t <= budget {
            // f is linear on [lo, t]
            return if f_lo == f_t { t } else { lo + (f_lo - budget) * (t - lo) / (f_lo - f_t) };
        }
        lo = t;
        f_lo = f_t;
    }
    lo
}

fn fill(design: &Design, node: &NodeState, big_m: f64, x: &DVector<f64>) -> Fill {
    let m = design.m();
    let r = design.residuals(x);
    let mut z = DVector::zeros(m);
    let mut e = DVector::zeros(m);
    let free = node.free();
    let mags: Vec<f64> = free.iter().map(|&i| r[i].abs()).collect();
    let level = if free.is_empty() {
        0.0
    } else {
        water_level(&mags, big_m, node.remaining_budget as f64)
    };
    let mut at_level = Vec::new();
    for i in 0..m {
        let a = r[i].abs();
        let s = r[i].signum();
        match node.fix[i] {
            Fix::Zero => e[i] = r[i],
            Fix::One => {
                z[i] = 1.0;
                e[i] = s * (a - big_m).max(0.0);
            }
            Fix::Free => {
                let zi = ((a - level) / big_m).clamp(0.0, 1.0);
                z[i] = zi;
                e[i] = s * (a - big_m * zi);
                if level > 0.0 && zi > 0.0 && zi < 1.0 {
                    at_level.push(i);
                }
            }
        }
    }
    Fill { z, e, at_level }
}

/// `psi(x)`: the relaxation value with (z, w) optimized out.
pub fn bigm_value(design: &Design, node: &NodeState, big_m: f64, x: &DVector<f64>) -> f64 {
    let f = fill(design, node, big_m, x);
    f.e.norm_squared() + x.dot(&(&design.q_pen * x))
}

pub fn solve_bigm_relaxation(
    design: &Design,
    big_m: f64,
    node: &NodeState,
    ctl: &RelaxControl,
    warm_x: Option<&DVector<f64>>,
) -> Result<RelaxationResult> {
    let p = design.p();
    let kept: Vec<f64> = node.fix.iter().map(|&f| if f == Fix::Zero { 1.0 } else { 0.0 }).collect();
    let mut curv = design.q_pen.clone();
    for (i, &k) in kept.iter().enumerate() {
        if k > 0.0 {
            let a = design.row(i);
            curv.ger(1.0, &a, &a, 1.0);
        }
    }
    let mu = 2.0 * min_eig_sym(&curv).0.max(0.0);

    let eval = |x: &DVector<f64>| -> (f64, DVector<f64>, Fill) {
        let f = fill(design, node, big_m, x);
        let value = f.e.norm_squared() + x.dot(&(&design.q_pen * x));
        let grad = (&design.q_pen * x) * 2.0 - design.a.tr_mul(&f.e) * 2.0;
        (value, grad, f)
    };
    let certify = |value: f64, grad: &DVector<f64>| -> f64 {
        // psi >= 0 always holds
        if mu > 0.0 {
            (value - grad.norm_squared() / (2.0 * mu)).max(0.0)
        } else {
            0.0
        }
    };

    let mut x = warm_x.cloned().unwrap_or_else(|| DVector::zeros(p));
    let (mut value, mut grad, mut f) = eval(&x);
    let mut lb = certify(value, &grad);
    let mut iters = 0;
    let mut converged = ctl.done(value, lb);
    while !converged && iters < ctl.max_iters && !ctl.expired() {
        iters += 1;
        // generalized Hessian of the active quadratic piece
        let mut h = design.q_pen.clone();
        for i in 0..design.m() {
            let active = match node.fix[i] {
                Fix::Zero => true,
                Fix::One => f.e[i] != 0.0,
                Fix::Free => f.z[i] == 0.0 || f.z[i] == 1.0,
            };
            if active {
                let a = design.row(i);
                h.ger(1.0, &a, &a, 1.0);
            }
        }
        if !f.at_level.is_empty() {
            let mut level_dir = DVector::zeros(p);
            for &i in &f.at_level {
                level_dir.axpy(f.e[i].signum(), &design.row(i), 1.0);
            }
            h.ger(1.0 / f.at_level.len() as f64, &level_dir, &level_dir, 1.0);
        }
        h *= 2.0;
        let step = match factor_lower(&h) {
            Ok(fh) => -fh.solve(&grad),
            Err(_) => -&grad / (2.0 * curv.diagonal().max()).max(1e-12),
        };
        let slope = grad.dot(&step);
        if !(slope < 0.0) {
            break;
        }
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let xn = &x + &step * alpha;
            let (vn, gn, fnew) = eval(&xn);
            if vn <= value + 1e-4 * alpha * slope {
                x = xn;
                value = vn;
                grad = gn;
                f = fnew;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        lb = lb.max(certify(value, &grad));
        converged = ctl.done(value, lb);
        if !accepted {
            break;
        }
    }
    let w = &f.e - design.residuals(&x);
    Ok(RelaxationResult {
        x,
        z: f.z,
        w,
        value,
        certified_lb: lb.min(value),
        iterations: iters,
        converged,
    })
}
