//! Averaged primal-dual loop that tunes the perspective weights: solve the
//! relaxation with the current weights, re-solve the weight SDP at its
//! solution and move the weights by a step of `1/k` toward the new ones.

use nalgebra::DVector;

use super::{
    initial_weights, solve_perspective_relaxation, solve_weight_sdp, Fix, NodeState, RelaxControl, RelaxationResult,
    WeightVector,
};
use crate::error::Result;
use crate::problem::{Design, Solution};

#[derive(Debug, Clone, Copy)]
pub struct TuneParams {
    pub max_iters: usize,
    /// Stop after this many iterations, not necessarily consecutive, whose
    /// gap improvement is below `stall_eps`.
    pub stall_iters: usize,
    pub stall_eps: f64,
    pub u_floor: f64,
    pub psd_tol: f64,
}

impl Default for TuneParams {
    fn default() -> Self {
        TuneParams {
            max_iters: 200,
            stall_iters: 20,
            stall_eps: 1e-6,
            u_floor: 1.001,
            psd_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TuneOutcome {
    /// Averaged weights after the last iteration.
    pub weights: WeightVector,
    /// Best lower and upper bound after each iteration.
    pub lb_trace: Vec<f64>,
    pub ub_trace: Vec<f64>,
    pub iterations: usize,
    pub best_lb: f64,
    pub best_ub: f64,
    pub incumbent: Option<Solution>,
    pub stalled: bool,
    pub floor_lowered: bool,
    pub warning: bool,
    /// Relaxation solved in the last iteration, with the weights before the
    /// final averaging step.
    pub last_relaxation: Option<RelaxationResult>,
}

impl TuneOutcome {
    pub fn gap(&self) -> f64 {
        relative_gap(self.best_lb, self.best_ub)
    }
}

pub(crate) fn relative_gap(lb: f64, ub: f64) -> f64 {
    if !ub.is_finite() {
        return f64::INFINITY;
    }
    ((ub - lb) / ub.max(1e-12)).max(0.0)
}

/// Feasible solution from a node relaxation: the fixed discards plus the free
/// rows with the largest `z` (ties to the lower index), refit on the rest.
pub fn round_heuristic(relax: &RelaxationResult, design: &Design, node: &NodeState) -> Result<Solution> {
    let mut free = node.free();
    free.sort_by(|&i, &j| relax.z[j].total_cmp(&relax.z[i]).then(i.cmp(&j)));
    let mut flags: Vec<bool> = node.fix.iter().map(|&f| f == Fix::One).collect();
    for &i in free.iter().take(node.remaining_budget) {
        flags[i] = true;
    }
    design.fit_subset(&flags)
}

/// Runs the averaged loop at `node` from the weights `start`.
pub fn tune_weights(
    design: &Design,
    node: &NodeState,
    start: WeightVector,
    params: &TuneParams,
    ctl: &RelaxControl,
) -> Result<TuneOutcome> {
    let mut d = start;
    let mut out = TuneOutcome {
        weights: d.clone(),
        lb_trace: Vec::new(),
        ub_trace: Vec::new(),
        iterations: 0,
        best_lb: f64::NEG_INFINITY,
        best_ub: f64::INFINITY,
        incumbent: None,
        stalled: false,
        floor_lowered: false,
        warning: false,
        last_relaxation: None,
    };
    let mut warm: Option<DVector<f64>> = None;
    let mut stall = 0;
    let mut last_gap = f64::INFINITY;
    for k in 1..=params.max_iters {
        if ctl.expired() {
            break;
        }
        let rel = solve_perspective_relaxation(design, &d, node, ctl, warm.as_ref())?;
        out.best_lb = out.best_lb.max(rel.certified_lb);
        let sol = round_heuristic(&rel, design, node)?;
        if sol.objective < out.best_ub {
            out.best_ub = sol.objective;
            out.incumbent = Some(sol);
        }
        out.lb_trace.push(out.best_lb);
        out.ub_trace.push(out.best_ub);
        out.iterations = k;

        let gap = relative_gap(out.best_lb, out.best_ub);
        // counted over the whole run, not only consecutive iterations
        if k >= 2 && last_gap - gap < params.stall_eps {
            stall += 1;
        }
        last_gap = gap;
        if gap <= 0.0 {
            out.last_relaxation = Some(rel);
            break;
        }

        let sdp = solve_weight_sdp(design, node, &rel.z, &rel.w, params.u_floor, params.psd_tol, ctl.deadline)?;
        out.floor_lowered |= sdp.floor_lowered;
        out.warning |= sdp.warning;
        let step = 1.0 / k as f64;
        let next: Vec<f64> = (0..design.m())
            .map(|i| {
                if node.fix[i] == Fix::Free {
                    d.d[i] + step * (sdp.weights.d[i] - d.d[i])
                } else {
                    d.d[i]
                }
            })
            .collect();
        d = WeightVector::from_d(next)?;
        warm = Some(rel.z.clone());
        out.last_relaxation = Some(rel);
        if stall >= params.stall_iters {
            out.stalled = true;
            break;
        }
    }
    out.weights = d;
    Ok(out)
}

/// Tuning at the root from the simple conic weights.
pub fn tune_conic_plus(design: &Design, params: &TuneParams, ctl: &RelaxControl) -> Result<TuneOutcome> {
    let root = NodeState::root(design);
    tune_weights(design, &root, initial_weights(design)?, params, ctl)
}
