use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::Args;
use lts_core::synthetic::{generate_synthetic, outlier_count};
use lts_core::{standardize, BnbParams, GroundTruth, Method, ProblemSpec, StandardizedInstance, Status};
use serde::{Deserialize, Serialize};

use crate::solve::{budget_from_frac, intercept_mode, load, load_truth, parse_method, solve_instance};
use crate::{Failure, Outcome};

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// TOML manifest; relative dataset paths resolve against its directory.
    pub manifest: PathBuf,
    /// Write the per-solve rows here instead of stdout.
    #[arg(short = 'o', long = "out")]
    pub out: Option<PathBuf>,
    /// Also write per-group means (time-outs counted at the time limit).
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_fracs")]
    pub budget_fracs: Vec<f64>,
    #[serde(default = "default_time_limit")]
    pub time_limit: f64,
    /// Overrides the per-source default (zero for files, proxy for synthetic).
    #[serde(default)]
    pub intercept: Option<String>,
    #[serde(default)]
    pub parallel: bool,
    #[serde(default)]
    pub datasets: Vec<DatasetEntry>,
    #[serde(default)]
    pub synthetic: Option<SyntheticGrid>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub path: PathBuf,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default = "default_response")]
    pub response: String,
    #[serde(default)]
    pub truth: Option<PathBuf>,
}

/// Planted-outlier instances; the budget is the planted outlier count.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticGrid {
    pub n: Vec<usize>,
    pub m: Vec<usize>,
    pub tau: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Falls back to the manifest's lambdas.
    #[serde(default)]
    pub lambdas: Option<Vec<f64>>,
}

fn default_methods() -> Vec<String> {
    vec!["big-m".into(), "conic".into(), "conic-plus".into()]
}

fn default_lambdas() -> Vec<f64> {
    vec![0.05, 0.1, 0.2]
}

fn default_fracs() -> Vec<f64> {
    vec![0.1, 0.2, 0.3, 0.4]
}

fn default_time_limit() -> f64 {
    600.0
}

fn default_response() -> String {
    "y".into()
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct BenchRow {
    pub dataset: String,
    /// Rows sharing a group are averaged in the summary.
    pub group: String,
    pub method: String,
    pub lambda: f64,
    pub budget: usize,
    pub status: String,
    pub time_s: Option<f64>,
    pub nodes: Option<usize>,
    pub gap: Option<f64>,
    pub objective: Option<f64>,
    /// `(objective - best) / best` over all methods on the same instance.
    pub quality_gap: Option<f64>,
    pub risk: Option<f64>,
    pub recall: Option<f64>,
    pub error: Option<String>,
}

struct Instance {
    name: String,
    group: String,
    inst: StandardizedInstance,
    truth: Option<GroundTruth>,
    intercept: String,
    /// (lambda, budget) pairs to run.
    settings: Vec<(f64, usize)>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn read_manifest(path: &Path) -> Result<Manifest, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn instances(manifest: &Manifest, base: &Path) -> Result<Vec<Instance>, Failure> {
    let mut all = Vec::new();
    for entry in &manifest.datasets {
        let path = resolve(base, &entry.path);
        let inst = load(&path, &entry.response)?;
        let truth = entry.truth.as_ref().map(|t| load_truth(&resolve(base, t))).transpose()?;
        let name = entry.name.clone().unwrap_or_else(|| {
            path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
        });
        let mut settings = Vec::new();
        for &lambda in &manifest.lambdas {
            for &frac in &manifest.budget_fracs {
                settings.push((lambda, budget_from_frac(frac, inst.m())?));
            }
        }
        all.push(Instance {
            group: name.clone(),
            name,
            inst,
            truth,
            intercept: manifest.intercept.clone().unwrap_or_else(|| "zero".into()),
            settings,
        });
    }
    if let Some(grid) = &manifest.synthetic {
        let lambdas = grid.lambdas.as_ref().unwrap_or(&manifest.lambdas);
        for &n in &grid.n {
            for &m in &grid.m {
                for &tau in &grid.tau {
                    for &seed in &grid.seeds {
                        let (data, truth) =
                            generate_synthetic(n, m, tau, seed).map_err(|e| Failure::Usage(e.to_string()))?;
                        let inst = standardize(&data).map_err(Failure::from_data)?;
                        let budget = outlier_count(m, tau);
                        all.push(Instance {
                            name: format!("synthetic n={n} m={m} tau={tau} seed={seed}"),
                            group: format!("synthetic n={n} m={m} tau={tau}"),
                            inst,
                            truth: Some(truth),
                            intercept: manifest.intercept.clone().unwrap_or_else(|| "proxy".into()),
                            settings: lambdas.iter().map(|&l| (l, budget)).collect(),
                        });
                    }
                }
            }
        }
    }
    Ok(all)
}

/// Runs every method on every (instance, lambda, budget). A failed solve
/// becomes an `error` row.
pub fn run_manifest(manifest: &Manifest, base: &Path) -> Result<Vec<BenchRow>, Failure> {
    let methods: Vec<Method> = manifest
        .methods
        .iter()
        .map(|s| parse_method(s).map_err(Failure::Usage))
        .collect::<Result<_, _>>()?;
    if manifest.time_limit <= 0.0 || !manifest.time_limit.is_finite() {
        return Err(Failure::Usage(format!("time limit must be positive, got {}", manifest.time_limit)));
    }
    let mut rows = Vec::new();
    for item in instances(manifest, base)? {
        let mode = intercept_mode(&item.intercept)?;
        for &(lambda, budget) in &item.settings {
            let first = rows.len();
            for &method in &methods {
                let spec = ProblemSpec::new(method, lambda, budget)
                    .with_intercept(mode)
                    .with_time_limit(manifest.time_limit);
                let mut params = BnbParams::from_spec(&spec);
                params.time_limit = Duration::from_secs_f64(manifest.time_limit);
                params.parallel = manifest.parallel;
                let mut row = BenchRow {
                    dataset: item.name.clone(),
                    group: item.group.clone(),
                    method: method.as_str().to_string(),
                    lambda,
                    budget,
                    ..BenchRow::default()
                };
                match solve_instance(&item.inst, &spec, &params, item.truth.as_ref()) {
                    Ok(out) => {
                        row.status = out.status;
                        row.time_s = Some(out.time_s);
                        row.nodes = out.nodes;
                        row.gap = out.gap;
                        row.objective = Some(out.objective);
                        row.risk = out.risk;
                        row.recall = out.recall;
                    }
                    Err(f) => {
                        row.status = "error".into();
                        row.error = Some(match f {
                            Failure::Usage(m) | Failure::Data(m) => m,
                        });
                    }
                }
                rows.push(row);
            }
            fill_quality_gaps(&mut rows[first..]);
        }
    }
    Ok(rows)
}

fn fill_quality_gaps(rows: &mut [BenchRow]) {
    let best = rows.iter().filter_map(|r| r.objective).fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return;
    }
    for r in rows.iter_mut() {
        r.quality_gap = r.objective.map(|z| ((z - best) / best.max(1e-12)).max(0.0));
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub group: String,
    pub method: String,
    pub lambda: f64,
    pub budget: usize,
    pub runs: usize,
    pub errors: usize,
    pub time_limits: usize,
    pub time_s: Option<f64>,
    pub nodes: Option<f64>,
    pub gap: Option<f64>,
    pub quality_gap: Option<f64>,
    pub risk: Option<f64>,
    pub recall: Option<f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Plain means per (group, method, lambda, budget); runs that hit the time
/// limit count as the limit itself.
pub fn summarize(rows: &[BenchRow], time_limit: f64) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, String, u64, usize), Vec<&BenchRow>> = BTreeMap::new();
    for r in rows {
        let key = (r.group.clone(), r.method.clone(), r.lambda.to_bits(), r.budget);
        groups.entry(key).or_default().push(r);
    }
    groups
        .into_values()
        .map(|g| {
            let ok: Vec<&BenchRow> = g.iter().copied().filter(|r| r.error.is_none()).collect();
            let timed_out = |r: &BenchRow| r.status == Status::TimeLimit.as_str();
            SummaryRow {
                group: g[0].group.clone(),
                method: g[0].method.clone(),
                lambda: g[0].lambda,
                budget: g[0].budget,
                runs: g.len(),
                errors: g.len() - ok.len(),
                time_limits: ok.iter().filter(|r| timed_out(r)).count(),
                time_s: mean(ok.iter().filter_map(|r| if timed_out(r) { Some(time_limit) } else { r.time_s })),
                nodes: mean(ok.iter().filter_map(|r| r.nodes.map(|n| n as f64))),
                gap: mean(ok.iter().filter_map(|r| r.gap)),
                quality_gap: mean(ok.iter().filter_map(|r| r.quality_gap)),
                risk: mean(ok.iter().filter_map(|r| r.risk)),
                recall: mean(ok.iter().filter_map(|r| r.recall)),
            }
        })
        .collect()
}

fn write_csv<T: Serialize>(rows: &[T], out: &mut dyn Write) -> Result<(), Failure> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Failure::Data(e.to_string()))?;
    }
    w.flush().map_err(|e| Failure::Data(e.to_string()))
}

fn write_csv_file<T: Serialize>(rows: &[T], path: &Path) -> Result<(), Failure> {
    let mut file = std::fs::File::create(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    write_csv(rows, &mut file)
}

pub fn cmd_bench(args: &BenchArgs, out: &mut dyn Write) -> Result<Outcome, Failure> {
    let manifest = read_manifest(&args.manifest)?;
    let base = args.manifest.parent().unwrap_or(Path::new("."));
    let rows = run_manifest(&manifest, base)?;
    match &args.out {
        Some(path) => write_csv_file(&rows, path)?,
        None => write_csv(&rows, out)?,
    }
    if let Some(path) = &args.summary {
        write_csv_file(&summarize(&rows, manifest.time_limit), path)?;
    }
    Ok(Outcome::Done)
}
