//! Perspective (conic) relaxation at a node.
//!
//! For fixed z the w-block minimizes in closed form, leaving the weighted
//! ridge value function
//! `phi(z) = min_x sum_{kept} r_i^2 + sum_{free} rho(d_i, z_i) r_i^2 + x'Qx`
//! with `rho(d, z) = d(1 - z) / (z + d(1 - z))`. The pair (x, z) is optimized
//! by a primal log-barrier Newton method; every step is O(k p^2) because the
//! z-block of the Hessian is diagonal plus the rank-one budget term.
//! Bounds come from linearizing the convex `phi` at the current z.

use nalgebra::{DMatrix, DVector};

use super::{z_step, Fix, NodeState, RelaxControl, RelaxationResult, WeightVector};
use crate::error::Result;
use crate::linalg::factor_lower;
use crate::problem::Design;

/// Residual weight left after the perspective term absorbs what it can.
pub fn perspective_weight(d: f64, z: f64) -> f64 {
    if z <= 0.0 {
        return 1.0;
    }
    d * (1.0 - z) / (z + d * (1.0 - z))
}

/// `rho`, `rho'` and `rho''` in z.
fn rho_derivs(d: f64, z: f64) -> (f64, f64, f64) {
    let q = d + (1.0 - d) * z;
    (d * (1.0 - z) / q, -d / (q * q), 2.0 * d * (1.0 - d) / (q * q * q))
}

struct Ctx<'a> {
    design: &'a Design,
    /// Per-row weight of kept rows (1) and discarded rows (0).
    base_w: Vec<f64>,
    a0: DMatrix<f64>,
    y0: DVector<f64>,
    free: Vec<usize>,
    af: DMatrix<f64>,
    yf: DVector<f64>,
    df: Vec<f64>,
    rb: f64,
    /// `2 (Q + A0'A0)`.
    h0: DMatrix<f64>,
}

impl<'a> Ctx<'a> {
    fn new(design: &'a Design, d: &WeightVector, node: &NodeState) -> Self {
        let zero = node.fixed_zero();
        let free = node.free();
        let p = design.p();
        let base_w = node.fix.iter().map(|&f| if f == Fix::Zero { 1.0 } else { 0.0 }).collect();
        let a0 = DMatrix::from_fn(zero.len(), p, |i, j| design.a[(zero[i], j)]);
        let y0 = DVector::from_fn(zero.len(), |i, _| design.y[zero[i]]);
        let af = DMatrix::from_fn(free.len(), p, |i, j| design.a[(free[i], j)]);
        let yf = DVector::from_fn(free.len(), |i, _| design.y[free[i]]);
        let df = free.iter().map(|&i| d.d[i]).collect();
        let h0 = (&design.q_pen + a0.tr_mul(&a0)) * 2.0;
        Ctx {
            design,
            base_w,
            a0,
            y0,
            af,
            yf,
            df,
            rb: node.remaining_budget as f64,
            h0,
            free,
        }
    }

    fn k(&self) -> usize {
        self.free.len()
    }

    /// Smooth part `F(x, z)`.
    fn smooth(&self, x: &DVector<f64>, z: &[f64]) -> f64 {
        let r0 = &self.y0 - &self.a0 * x;
        let rf = &self.yf - &self.af * x;
        let mut v = r0.norm_squared() + x.dot(&(&self.design.q_pen * x));
        for i in 0..self.k() {
            v += perspective_weight(self.df[i], z[i]) * rf[i] * rf[i];
        }
        v
    }

    fn barrier(&self, z: &[f64]) -> f64 {
        let slack = self.rb - z.iter().sum::<f64>();
        if slack <= 0.0 || z.iter().any(|&v| v <= 0.0 || v >= 1.0) {
            return f64::INFINITY;
        }
        -z.iter().map(|&v| v.ln() + (1.0 - v).ln()).sum::<f64>() - slack.ln()
    }

    /// Exact `phi(z)` by a weighted ridge solve.
    fn phi(&self, z: &[f64]) -> Result<(DVector<f64>, f64)> {
        let mut w = self.base_w.clone();
        for (j, &i) in self.free.iter().enumerate() {
            w[i] = perspective_weight(self.df[j], z[j]);
        }
        self.design.weighted_ridge(&w, &self.design.q_pen)
    }

    /// `phi(z)`, its minimizer `x` and the certified bound
    /// `phi(z) + min_{z' in Z} grad' (z' - z)`.
    fn certify(&self, z: &[f64]) -> Result<(DVector<f64>, f64, f64)> {
        let (x, value) = self.phi(z)?;
        let rf = &self.yf - &self.af * &x;
        let g: Vec<f64> = (0..self.k())
            .map(|i| rho_derivs(self.df[i], z[i]).1 * rf[i] * rf[i])
            .collect();
        let mut sorted = g.clone();
        sorted.sort_by(f64::total_cmp);
        let best: f64 = sorted.iter().take(self.rb as usize).sum();
        let at: f64 = g.iter().zip(z).map(|(gi, zi)| gi * zi).sum();
        Ok((x, value, value + (best - at).min(0.0)))
    }

    /// One damped Newton step on `t F + barrier`; returns the decrement
    /// squared, or `None` if no progress was possible.
    fn newton_step(&self, t: f64, x: &mut DVector<f64>, z: &mut [f64]) -> Option<f64> {
        let k = self.k();
        let p = self.design.p();
        let r0 = &self.y0 - &self.a0 * &*x;
        let rf = &self.yf - &self.af * &*x;
        let slack = self.rb - z.iter().sum::<f64>();
        let beta = 1.0 / (slack * slack);

        // gradient in x
        let mut gx = (&self.design.q_pen * &*x) * (2.0 * t);
        gx -= self.a0.tr_mul(&r0) * (2.0 * t);
        let mut rho_r = DVector::zeros(k);
        let mut gz = vec![0.0; k];
        let mut dz_diag = vec![0.0; k];
        let mut cross = vec![0.0; k];
        let mut omega = vec![0.0; k];
        for i in 0..k {
            let (rho, d1, d2) = rho_derivs(self.df[i], z[i]);
            let ri = rf[i];
            rho_r[i] = rho * ri;
            gz[i] = t * d1 * ri * ri - 1.0 / z[i] + 1.0 / (1.0 - z[i]) + 1.0 / slack;
            dz_diag[i] = t * d2 * ri * ri + 1.0 / (z[i] * z[i]) + 1.0 / ((1.0 - z[i]) * (1.0 - z[i]));
            cross[i] = -2.0 * t * d1 * ri;
            omega[i] = 2.0 * t * rho - cross[i] * cross[i] / dz_diag[i];
        }
        gx -= self.af.tr_mul(&rho_r) * (2.0 * t);

        // Schur complement on x
        let v: Vec<f64> = dz_diag.iter().map(|&d| 1.0 / d).collect();
        let gamma = beta / (1.0 + beta * v.iter().sum::<f64>());
        let mut scaled = self.af.clone();
        for i in 0..k {
            scaled.row_mut(i).scale_mut(omega[i]);
        }
        let mut s = &self.h0 * t + self.af.tr_mul(&scaled);
        let cv = DVector::from_fn(k, |i, _| cross[i] * v[i]);
        let c = self.af.tr_mul(&cv);
        s.ger(gamma, &c, &c, 1.0);

        // M = (D + beta 11')^{-1}
        let apply_m = |y: &[f64]| -> Vec<f64> {
            let vy: f64 = v.iter().zip(y).map(|(a, b)| a * b).sum();
            (0..k).map(|i| v[i] * y[i] - gamma * v[i] * vy).collect()
        };
        let mgz = apply_m(&gz);
        let wv = DVector::from_fn(k, |i, _| cross[i] * mgz[i]);
        let rhs = -&gx + self.af.tr_mul(&wv);

        let mut jitter = 0.0;
        let dx = loop {
            let mut sj = s.clone();
            if jitter > 0.0 {
                for j in 0..p {
                    sj[(j, j)] += jitter;
                }
            }
            match factor_lower(&sj) {
                Ok(f) => break f.solve(&rhs),
                Err(_) => {
                    let scale = (0..p).map(|j| s[(j, j)].abs()).fold(0.0, f64::max).max(1e-300);
                    jitter = if jitter == 0.0 { 1e-14 * scale } else { jitter * 100.0 };
                    if jitter > 1e-4 * scale {
                        return None;
                    }
                }
            }
        };
        let adx = &self.af * &dx;
        let inner: Vec<f64> = (0..k).map(|i| -(gz[i] + cross[i] * adx[i])).collect();
        let dz = apply_m(&inner);

        let slope = gx.dot(&dx) + gz.iter().zip(&dz).map(|(a, b)| a * b).sum::<f64>();
        let dec2 = -slope;
        if !(dec2 > 0.0) {
            return Some(0.0);
        }

        // fraction to the boundary
        let mut amax = 1.0f64;
        let dsum: f64 = dz.iter().sum();
        for i in 0..k {
            if dz[i] < 0.0 {
                amax = amax.min(-z[i] / dz[i]);
            } else if dz[i] > 0.0 {
                amax = amax.min((1.0 - z[i]) / dz[i]);
            }
        }
        if dsum > 0.0 {
            amax = amax.min(slack / dsum);
        }
        let mut alpha = if amax >= 1.0 { 1.0 } else { 0.99 * amax };

        let f0 = t * self.smooth(x, z) + self.barrier(z);
        let mut zn = vec![0.0; k];
        for _ in 0..60 {
            let xn = &*x + &dx * alpha;
            for i in 0..k {
                zn[i] = z[i] + alpha * dz[i];
            }
            let f1 = t * self.smooth(&xn, &zn) + self.barrier(&zn);
            if f1 <= f0 + 1e-4 * alpha * slope {
                *x = xn;
                z.copy_from_slice(&zn);
                return Some(dec2);
            }
            alpha *= 0.5;
        }
        None
    }
}

/// Minimizes the perspective relaxation over the node's box-and-budget set.
///
/// The returned `certified_lb` is valid whether or not the iteration
/// converged; `ctl.cutoff` allows an early exit once it proves a prune.
pub fn solve_perspective_relaxation(
    design: &Design,
    d: &WeightVector,
    node: &NodeState,
    ctl: &RelaxControl,
    warm_z: Option<&DVector<f64>>,
) -> Result<RelaxationResult> {
    let m = design.m();
    let ctx = Ctx::new(design, d, node);
    let k = ctx.k();
    let rb = node.remaining_budget;

    let assemble = |x: DVector<f64>, zf: &[f64], value: f64, lb: f64, iters: usize, conv: bool| {
        let r = design.residuals(&x);
        let mut z = DVector::zeros(m);
        let mut w = DVector::zeros(m);
        for i in 0..m {
            if node.fix[i] == Fix::One {
                z[i] = 1.0;
                w[i] = -r[i];
            }
        }
        for (j, &i) in ctx.free.iter().enumerate() {
            let zi = zf[j];
            z[i] = zi.max(ctl.z_floor).min(1.0);
            if zi > 0.0 {
                w[i] = -r[i] * zi / (zi + ctx.df[j] * (1.0 - zi));
            }
        }
        RelaxationResult {
            x,
            z,
            w,
            value,
            certified_lb: lb.min(value),
            iterations: iters,
            converged: conv,
        }
    };

    if node.is_leaf() {
        let zf = vec![if rb > 0 { 1.0 } else { 0.0 }; k];
        let (x, value) = ctx.phi(&zf)?;
        return Ok(assemble(x, &zf, value, value, 0, true));
    }

    // start: scores from the fit with every free row kept
    let reference: Vec<f64> = match warm_z {
        Some(wz) => ctx.free.iter().map(|&i| wz[i]).collect(),
        None => {
            let (x, _) = ctx.phi(&vec![0.0; k])?;
            let rf = &ctx.yf - &ctx.af * &x;
            let scores: Vec<f64> = (0..k).map(|i| ctx.df[i] * rf[i] * rf[i]).collect();
            z_step(&scores, rb as f64).z
        }
    };
    let total: f64 = reference.iter().sum();
    let shrink = if total > rb as f64 { rb as f64 / total } else { 1.0 };
    let uniform = 0.25 * rb as f64 / k as f64;
    let mut z: Vec<f64> = reference
        .iter()
        .map(|&v| 0.5 * (v * shrink).clamp(0.0, 1.0) + uniform)
        .collect();
    let (mut x, _) = ctx.phi(&z)?;

    let (xc, mut best_val, mut best_lb) = ctx.certify(&z)?;
    let mut best_x = xc;
    let mut best_z = z.clone();
    if ctl.done(best_val, best_lb) {
        return Ok(assemble(best_x, &best_z, best_val, best_lb, 0, true));
    }

    let nu = (2 * k + 1) as f64;
    let mut t = nu / ctx.smooth(&x, &z).max(1e-12);
    let mut iters = 0;
    let mut converged = false;
    'outer: for _ in 0..80 {
        for _ in 0..100 {
            iters += 1;
            if iters > ctl.max_iters || ctl.expired() {
                break 'outer;
            }
            match ctx.newton_step(t, &mut x, &mut z) {
                Some(dec2) if dec2 > 1e-9 => {}
                Some(_) => break,
                None => break,
            }
        }
        let (xc, val, lb) = ctx.certify(&z)?;
        if lb > best_lb {
            best_lb = lb;
        }
        if val < best_val {
            best_val = val;
            best_x = xc;
            best_z = z.clone();
        }
        if ctl.done(best_val, best_lb) {
            converged = true;
            break;
        }
        // the barrier center is as accurate as double precision allows
        if nu / t < 1e-3 * ctl.rel_tol * best_val.abs().max(ctl.abs_floor) {
            converged = best_val - best_lb <= 1e3 * ctl.rel_tol * best_val.abs().max(ctl.abs_floor);
            break;
        }
        t *= 8.0;
    }
    Ok(assemble(best_x, &best_z, best_val, best_lb, iters, converged))
}
