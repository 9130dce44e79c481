use std::fs::{self, File};
use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use lts_core::synthetic::generate_synthetic;

use crate::{Failure, Outcome};

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Number of features.
    #[arg(short = 'n', long = "features")]
    pub n: usize,
    /// Number of rows.
    #[arg(short = 'm', long = "rows")]
    pub m: usize,
    /// Fraction of rows whose response is shifted.
    #[arg(long, default_value_t = 0.1)]
    pub tau: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory; receives data.csv and truth.json.
    #[arg(short = 'o', long = "out")]
    pub out: PathBuf,
}

fn io_failure(path: &std::path::Path, err: impl std::fmt::Display) -> Failure {
    Failure::Data(format!("{}: {err}", path.display()))
}

pub fn cmd_gen(args: &GenArgs, out: &mut dyn Write) -> Result<Outcome, Failure> {
    let (data, truth) =
        generate_synthetic(args.n, args.m, args.tau, args.seed).map_err(|e| Failure::Usage(e.to_string()))?;
    fs::create_dir_all(&args.out).map_err(|e| io_failure(&args.out, e))?;

    let csv_path = args.out.join("data.csv");
    let file = File::create(&csv_path).map_err(|e| io_failure(&csv_path, e))?;
    data.to_csv_writer(file).map_err(|e| io_failure(&csv_path, e))?;

    let truth_path = args.out.join("truth.json");
    let json = truth.to_json().map_err(|e| Failure::Data(e.to_string()))?;
    fs::write(&truth_path, json + "\n").map_err(|e| io_failure(&truth_path, e))?;

    writeln!(
        out,
        "wrote {} and {} ({} outliers)",
        csv_path.display(),
        truth_path.display(),
        truth.outlier_set.len()
    )
    .map_err(|e| Failure::Data(e.to_string()))?;
    Ok(Outcome::Done)
}
