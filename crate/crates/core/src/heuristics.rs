//! Baseline estimators: ridge (ls+l2), least absolute deviations and the
//! alternating C-step heuristic.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::problem::{Design, InterceptLayout, Solution};

/// Ridge fit on every row.
pub fn ls_l2(design: &Design) -> Result<Solution> {
    let keep = vec![true; design.m()];
    let (x, _) = design.ridge(&keep)?;
    Ok(design.solution(&x, &vec![false; design.m()]))
}

#[derive(Debug, Clone)]
pub struct LadOutcome {
    /// Coefficients in the layout of the design that was fitted.
    pub x: DVector<f64>,
    pub l1: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub const LAD_MAX_ITERS: usize = 10_000;
const LAD_SMOOTHING: f64 = 1e-8;

/// `sum_i |y_i - a_i'x|` by iteratively reweighted least squares on the
/// smoothed loss `sum sqrt(r^2 + eps^2)`, with `eps` driven down to `1e-8`.
/// Each reweighting is a majorize-minimize step, so the smoothed loss never
/// increases.
pub fn lad(design: &Design, tol: f64) -> Result<LadOutcome> {
    let (m, p) = (design.m(), design.p());
    if m <= p {
        return Err(Error::InvalidInput(format!("lad needs m > n, got m = {m}, n = {p}")));
    }
    let zero = DMatrix::zeros(p, p);
    let l1 = |x: &DVector<f64>| design.residuals(x).abs().sum();
    let smoothed = |x: &DVector<f64>, eps: f64| -> f64 {
        design.residuals(x).iter().map(|r| (r * r + eps * eps).sqrt()).sum()
    };
    let (mut x, _) = design.weighted_ridge(&vec![1.0; m], &zero)?;
    let scale = design.residuals(&x).abs().max().max(1e-300);
    let mut eps = (1e-2 * scale).max(LAD_SMOOTHING);
    let mut best = x.clone();
    let mut best_l1 = l1(&x);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < LAD_MAX_ITERS {
        let mut prev = smoothed(&x, eps);
        let mut settled = false;
        while iterations < LAD_MAX_ITERS {
            iterations += 1;
            let r = design.residuals(&x);
            let w: Vec<f64> = r.iter().map(|ri| 1.0 / (ri * ri + eps * eps).sqrt()).collect();
            let next = match design.weighted_ridge(&w, &zero) {
                Ok((xn, _)) => xn,
                Err(_) => break,
            };
            let cur = smoothed(&next, eps);
            x = next;
            let v = l1(&x);
            if v < best_l1 {
                best_l1 = v;
                best = x.clone();
            }
            if prev - cur <= tol * cur.max(1e-300) {
                settled = true;
                break;
            }
            prev = cur;
        }
        if eps <= LAD_SMOOTHING {
            converged = settled;
            break;
        }
        eps = (eps * 0.1).max(LAD_SMOOTHING);
    }
    Ok(LadOutcome {
        x: best,
        l1: best_l1,
        iterations,
        converged,
    })
}

/// Slopes and intercept of a lifted vector in `layout`.
pub(crate) fn split(x: &DVector<f64>, layout: InterceptLayout) -> (DVector<f64>, f64) {
    match layout {
        InterceptLayout::None => (x.clone(), 0.0),
        InterceptLayout::Free => (x.rows(1, x.len() - 1).into_owned(), x[0]),
        InterceptLayout::Penalized { center } => (x.rows(1, x.len() - 1).into_owned(), center + x[0]),
    }
}

#[derive(Debug, Clone)]
pub struct AltOptOutcome {
    pub solution: Solution,
    /// Objective after each C-step.
    pub trace: Vec<f64>,
    pub steps: usize,
}

pub const ALT_OPT_MAX_ITERS: usize = 500;

/// C-steps from the ridge fit: flag the `budget` largest residuals, refit on
/// the rest, until the flagged set repeats.
pub fn alt_opt(design: &Design, max_iters: usize) -> Result<AltOptOutcome> {
    let start = ls_l2(design)?;
    let mut x = design.lift(&start.x, start.intercept);
    let mut flagged: Option<Vec<bool>> = None;
    let mut trace = Vec::new();
    let mut best: Option<Solution> = None;
    let mut steps = 0;
    while steps < max_iters {
        let next = design.largest_residuals(&design.residuals(&x), design.budget);
        if flagged.as_ref() == Some(&next) {
            break;
        }
        steps += 1;
        let sol = design.fit_subset(&next)?;
        x = design.lift(&sol.x, sol.intercept);
        trace.push(sol.objective);
        if best.as_ref().is_none_or(|b| sol.objective < b.objective) {
            best = Some(sol);
        }
        flagged = Some(next);
    }
    let solution = match best {
        Some(s) => s,
        None => design.fit_subset(&vec![false; design.m()])?,
    };
    Ok(AltOptOutcome { solution, trace, steps })
}
