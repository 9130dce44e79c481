use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{ArgGroup, Args};
use lts_core::metrics::{recall, risk, unstandardize_solution};
use lts_core::{
    solve, standardize, BnbParams, Dataset, GroundTruth, InterceptMode, Method, ProblemSpec, SolveReport, Status,
    StandardizedInstance,
};
use serde::Serialize;

use crate::{Failure, Outcome};

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("budget_choice").required(true).args(["budget", "budget_frac"])))]
pub struct SolveArgs {
    /// Headered CSV; every column other than the response and `reliable` is a feature.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "y")]
    pub response: String,
    /// big-m, conic, conic-plus, alt-opt, lad or ls-l2.
    #[arg(long, value_parser = parse_method)]
    pub method: Method,
    #[arg(long, default_value_t = 0.1)]
    pub lambda: f64,
    /// Number of rows that may be discarded.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Budget as a fraction of the rows, rounded down.
    #[arg(long = "budget-frac")]
    pub budget_frac: Option<f64>,
    /// Wall-clock limit in seconds, tuning included.
    #[arg(long = "time-limit", default_value_t = 600.0)]
    pub time_limit: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "proxy", value_parser = ["zero", "proxy", "reliable"])]
    pub intercept: String,
    /// Big-M constant (scaled units).
    #[arg(long = "M", default_value_t = 1000.0)]
    pub big_m: f64,
    /// Explore branch-and-bound nodes on several threads.
    #[arg(long)]
    pub parallel: bool,
    /// Seed the incumbent with the alternating heuristic.
    #[arg(long = "warm-start")]
    pub warm_start: bool,
    /// Re-tune conic+ weights at every node.
    #[arg(long = "node-retune")]
    pub node_retune: bool,
    /// Ground-truth JSON; adds risk and recall to the output.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

pub(crate) fn parse_method(s: &str) -> Result<Method, String> {
    s.parse::<Method>().map_err(|e| e.to_string())
}

/// `floor(frac * m)`.
pub(crate) fn budget_from_frac(frac: f64, m: usize) -> Result<usize, Failure> {
    if !(0.0..1.0).contains(&frac) {
        return Err(Failure::Usage(format!("budget fraction must lie in [0, 1), got {frac}")));
    }
    Ok((frac * m as f64 + 1e-9).floor() as usize)
}

/// The JSON record printed by `solve`. Coefficients are in original units;
/// the objective is the trimmed objective of the standardized problem.
#[derive(Debug, Clone, Serialize)]
pub struct SolveOutput {
    pub method: String,
    pub status: String,
    pub objective: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    pub time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alg1_iterations: Option<usize>,
    pub x: Vec<f64>,
    pub intercept: f64,
    pub discarded_indices: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_weights: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub risk: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl SolveOutput {
    pub fn is_warning(&self) -> bool {
        self.status == Status::WarningNumerical.as_str()
    }
}

fn finite(v: Option<f64>) -> Option<f64> {
    v.filter(|x| x.is_finite())
}

fn output(report: &SolveReport, inst: &StandardizedInstance, truth: Option<&GroundTruth>) -> SolveOutput {
    let (coef, intercept) = unstandardize_solution(&report.incumbent, inst);
    SolveOutput {
        method: report.method.as_str().to_string(),
        status: report.status.as_str().to_string(),
        objective: report.objective(),
        lower_bound: finite(report.lower_bound),
        gap: finite(report.gap),
        nodes: report.nodes,
        time_s: report.time_s,
        alg1_iterations: report.alg1_iterations,
        x: coef.iter().copied().collect(),
        intercept,
        discarded_indices: report.incumbent.discarded_indices(),
        d_weights: report.d_weights.clone(),
        // undefined metrics (x* = 0, no planted outliers) are left out
        risk: truth.and_then(|t| risk(&coef, t).ok()),
        recall: truth.and_then(|t| recall(&report.incumbent.z, t).ok()),
        notes: report.notes.clone(),
    }
}

/// Validates `spec` against `inst`, solves and converts the report.
pub fn solve_instance(
    inst: &StandardizedInstance,
    spec: &ProblemSpec,
    params: &BnbParams,
    truth: Option<&GroundTruth>,
) -> Result<SolveOutput, Failure> {
    spec.validate(inst).map_err(|e| Failure::Usage(e.to_string()))?;
    let report = solve(inst, spec, params).map_err(|e| Failure::Data(e.to_string()))?;
    Ok(output(&report, inst, truth))
}

pub(crate) fn intercept_mode(name: &str) -> Result<InterceptMode, Failure> {
    name.parse().map_err(|e: lts_core::Error| Failure::Usage(e.to_string()))
}

pub(crate) fn load(path: &Path, response: &str) -> Result<StandardizedInstance, Failure> {
    let data = Dataset::from_csv_path(path, response).map_err(Failure::from_data)?;
    standardize(&data).map_err(Failure::from_data)
}

pub(crate) fn load_truth(path: &Path) -> Result<GroundTruth, Failure> {
    GroundTruth::from_path(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

pub fn cmd_solve(args: &SolveArgs, out: &mut dyn Write) -> Result<Outcome, Failure> {
    let inst = load(&args.data, &args.response)?;
    let truth = args.truth.as_deref().map(load_truth).transpose()?;
    let budget = match (args.budget, args.budget_frac) {
        (Some(b), _) => b,
        (None, Some(f)) => budget_from_frac(f, inst.m())?,
        (None, None) => unreachable!("clap requires one budget flag"),
    };
    if args.time_limit <= 0.0 || !args.time_limit.is_finite() {
        return Err(Failure::Usage(format!("time limit must be positive, got {}", args.time_limit)));
    }

    let mut spec = ProblemSpec::new(args.method, args.lambda, budget)
        .with_intercept(intercept_mode(&args.intercept)?)
        .with_time_limit(args.time_limit);
    spec.seed = args.seed;
    spec.big_m = args.big_m;
    let mut params = BnbParams::from_spec(&spec);
    params.time_limit = Duration::from_secs_f64(args.time_limit);
    params.parallel = args.parallel;
    params.warm_start = args.warm_start;
    params.node_retune = args.node_retune;

    let result = solve_instance(&inst, &spec, &params, truth.as_ref())?;
    let json = serde_json::to_string(&result).map_err(|e| Failure::Data(e.to_string()))?;
    writeln!(out, "{json}").map_err(|e| Failure::Data(e.to_string()))?;
    Ok(if result.is_warning() { Outcome::Warning } else { Outcome::Done })
}
