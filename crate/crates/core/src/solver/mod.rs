//! Branch-and-bound engine, enumeration oracle and the method dispatcher.

mod bnb;
mod oracle;

pub use bnb::solve_mio;
pub use oracle::{enumerate_oracle, ORACLE_LIMIT};

use std::fmt;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::error::Result;
use crate::heuristics::{alt_opt, lad, ls_l2, split, ALT_OPT_MAX_ITERS};
use crate::problem::{Design, InterceptLayout, Method, ProblemSpec, Solution};
use crate::relax::TuneParams;
use crate::standardize::StandardizedInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    TimeLimit,
    NodeLimit,
    WarningNumerical,
    /// A baseline estimator with no optimality claim.
    Heuristic,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Optimal => "optimal",
            Status::TimeLimit => "time_limit",
            Status::NodeLimit => "node_limit",
            Status::WarningNumerical => "warning_numerical",
            Status::Heuristic => "heuristic",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct BnbParams {
    pub time_limit: Duration,
    pub node_limit: usize,
    pub gap_tol: f64,
    pub integrality_tol: f64,
    /// Accuracy requested from node relaxations.
    pub relax_tol: f64,
    pub big_m: f64,
    pub parallel: bool,
    /// Worker count in parallel mode; 0 picks the available parallelism
    /// (at least two).
    pub threads: usize,
    /// Re-tune the weights at every conic+ node with its fixings.
    pub node_retune: bool,
    pub retune_iters: usize,
    /// Seed the incumbent with the alternating heuristic.
    pub warm_start: bool,
    pub tune: TuneParams,
    /// Iteration cap for alt-opt and the lad solver tolerance.
    pub alt_opt_iters: usize,
    pub lad_tol: f64,
}

impl Default for BnbParams {
    fn default() -> Self {
        BnbParams {
            time_limit: Duration::from_secs(600),
            node_limit: usize::MAX,
            gap_tol: 1e-6,
            integrality_tol: 1e-6,
            relax_tol: 1e-9,
            big_m: 1000.0,
            parallel: false,
            threads: 0,
            node_retune: false,
            retune_iters: 5,
            warm_start: false,
            tune: TuneParams::default(),
            alt_opt_iters: ALT_OPT_MAX_ITERS,
            lad_tol: 1e-6,
        }
    }
}

impl BnbParams {
    pub fn from_spec(spec: &ProblemSpec) -> Self {
        let tol = &spec.tolerances;
        BnbParams {
            time_limit: Duration::from_secs_f64(spec.time_limit_s),
            gap_tol: tol.gap,
            integrality_tol: tol.integrality,
            relax_tol: tol.relax,
            big_m: spec.big_m,
            tune: TuneParams {
                u_floor: tol.u_floor,
                psd_tol: tol.psd,
                ..TuneParams::default()
            },
            lad_tol: tol.lad,
            ..BnbParams::default()
        }
    }

    pub(crate) fn worker_count(&self) -> usize {
        if !self.parallel {
            1
        } else if self.threads > 0 {
            self.threads
        } else {
            std::thread::available_parallelism().map_or(2, |n| n.get()).max(2)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TuneSummary {
    pub iterations: usize,
    pub lb_trace: Vec<f64>,
    pub ub_trace: Vec<f64>,
    pub stalled: bool,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub method: Method,
    pub status: Status,
    /// Best solution found, in standardized coordinates.
    pub incumbent: Solution,
    /// Absent for the baseline estimators.
    pub lower_bound: Option<f64>,
    pub gap: Option<f64>,
    pub nodes: Option<usize>,
    pub time_s: f64,
    pub root_bound: Option<f64>,
    pub alg1_iterations: Option<usize>,
    pub d_weights: Option<Vec<f64>>,
    pub tuning: Option<TuneSummary>,
    pub notes: Vec<String>,
}

impl SolveReport {
    pub fn objective(&self) -> f64 {
        self.incumbent.objective
    }
}

/// `(UB - LB) / max(UB, 1e-12)`, clamped at zero.
pub fn relative_gap(lb: f64, ub: f64) -> f64 {
    if !ub.is_finite() || !lb.is_finite() {
        return 1.0;
    }
    ((ub - lb) / ub.max(1e-12)).max(0.0)
}

fn heuristic_report(method: Method, incumbent: Solution, exact: bool, start: Instant) -> SolveReport {
    SolveReport {
        method,
        status: if exact { Status::Optimal } else { Status::Heuristic },
        lower_bound: exact.then_some(incumbent.objective),
        gap: exact.then_some(0.0),
        incumbent,
        nodes: None,
        time_s: start.elapsed().as_secs_f64(),
        root_bound: None,
        alg1_iterations: None,
        d_weights: None,
        tuning: None,
        notes: Vec::new(),
    }
}

/// Runs `spec.method` on `inst`. Baseline estimators are reported with the
/// budget's largest residuals at their coefficients flagged, so their
/// objective is the trimmed objective of the returned fit.
pub fn solve(inst: &StandardizedInstance, spec: &ProblemSpec, params: &BnbParams) -> Result<SolveReport> {
    let start = Instant::now();
    let design = Design::new(inst, spec)?;
    match spec.method {
        Method::BigM | Method::Conic | Method::ConicPlus => solve_mio(&design, spec.method, params),
        Method::LsL2 => {
            let fit = ls_l2(&design)?;
            let sol = design.evaluate_at(&design.lift(&fit.x, fit.intercept));
            Ok(heuristic_report(Method::LsL2, sol, design.budget == 0, start))
        }
        Method::AltOpt => {
            let out = alt_opt(&design, params.alt_opt_iters)?;
            Ok(heuristic_report(Method::AltOpt, out.solution, design.budget == 0, start))
        }
        Method::Lad => {
            let layout = match design.layout {
                InterceptLayout::None => InterceptLayout::None,
                _ => InterceptLayout::Free,
            };
            let unpenalized = ProblemSpec {
                lambda: 0.0,
                ..spec.clone()
            };
            let lad_design = Design::with_layout(inst, &unpenalized, layout, 0)?;
            let out = lad(&lad_design, params.lad_tol)?;
            let (coef, intercept) = split(&out.x, layout);
            let sol = design.evaluate_at(&design.lift(&coef, intercept));
            let mut report = heuristic_report(Method::Lad, sol, false, start);
            if !out.converged {
                report.status = Status::WarningNumerical;
                report.notes.push(format!("lad stopped after {} iterations", out.iterations));
            }
            Ok(report)
        }
    }
}
