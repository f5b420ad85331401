//! Command-line flags.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use odeid::harness::SystemKind;
use odeid::selection::Criterion;

#[derive(Debug, Parser)]
#[command(name = "odeid", version, about = "Sparse identification of ODE models from noisy, partial data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a benchmark system and write noisy observations plus ground truth.
    Simulate(SimulateArgs),
    /// Identify a model from an observation CSV.
    Discover(DiscoverArgs),
    /// Run a noise level × seed matrix on a benchmark system.
    Benchmark(BenchmarkArgs),
    /// Summarize result tables into box-plot statistics.
    Report(ReportArgs),
    /// Re-execute a run from its emitted manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, Args)]
pub struct OutArg {
    /// Output directory.
    #[arg(long, env = "ODEID_OUT", default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    /// Remove every sample strictly inside `start:end`.
    #[arg(long, value_parser = parse_gap, conflicts_with = "drop")]
    pub gap: Option<(f64, f64)>,
    /// Remove each scalar entry with this probability.
    #[arg(long)]
    pub drop: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub system: SystemKind,
    /// Noise standard deviation as a fraction of each component's spread.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sampling interval; the time horizon is kept.
    #[arg(long)]
    pub sample_interval: Option<f64>,
    #[command(flatten)]
    pub noise_args: NoiseArgs,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct LibraryArgs {
    /// Maximum total degree of the monomials.
    #[arg(long)]
    pub library_degree: Option<u32>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub include_constant: Option<bool>,
    /// Extra nonlinear term, e.g. `exp:1` for exp(a*x1). Repeatable.
    #[arg(long, value_parser = parse_nonlinear)]
    pub nonlinear: Vec<usize>,
    /// Fit on states divided by their standard deviations.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub standardize: Option<bool>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Comma-separated data weights.
    #[arg(long, value_parser = parse_list, default_value = "1e-3,1e-2,1e-1,1,1e1,1e2,1e3")]
    pub lambda_grid: FloatList,
    /// Comma-separated sparsity weights.
    #[arg(long, value_parser = parse_list, default_value = "1e-4,1e-3,1e-2,1e-1,1")]
    pub r_grid: FloatList,
    /// Width of the smooth L0 penalty.
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,
    /// Initial pruning block size.
    #[arg(long, default_value_t = 5)]
    pub k0: usize,
    /// Grid points per sampling interval.
    #[arg(long, default_value_t = 1)]
    pub refine: usize,
    #[arg(long, default_value = "bic")]
    pub criterion: Criterion,
    /// Iteration cap of each Levenberg-Marquardt solve.
    #[arg(long)]
    pub max_iters: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DiscoverArgs {
    /// Observation CSV with columns t,x1,...,xd.
    #[arg(long)]
    pub data: PathBuf,
    /// Known system: supplies library defaults and true coefficients.
    #[arg(long)]
    pub system: Option<SystemKind>,
    /// Clean trajectory CSV for state error.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[command(flatten)]
    pub library: LibraryArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub system: SystemKind,
    /// Comma-separated noise fractions.
    #[arg(long, value_parser = parse_list, default_value = "0.1")]
    pub noise: FloatList,
    /// Noise realizations per level.
    #[arg(long, default_value_t = 10)]
    pub seeds: usize,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub sample_interval: Option<f64>,
    /// Sweep sampling intervals and power-of-two refinements instead of a
    /// single configuration.
    #[arg(long)]
    pub refinement_sweep: bool,
    #[arg(long, value_parser = parse_list, default_value = "0.05,0.1,0.2,0.4")]
    pub sweep_intervals: FloatList,
    /// Smallest and largest grid spacing of the sweep.
    #[arg(long, value_parser = parse_gap, default_value = "0.025:0.4")]
    pub sweep_spacing: (f64, f64),
    #[command(flatten)]
    pub noise_args: NoiseArgs,
    #[command(flatten)]
    pub library: LibraryArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Result CSV files or directories searched for `results.csv`.
    #[arg(long, num_args = 1.., required = true)]
    pub results: Vec<PathBuf>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory (defaults to the one recorded in the manifest).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FloatList(pub Vec<f64>);

fn parse_list(s: &str) -> Result<FloatList, String> {
    let v: Result<Vec<f64>, _> = s.split(',').map(|x| x.trim().parse::<f64>()).collect();
    match v {
        Ok(v) if !v.is_empty() => Ok(FloatList(v)),
        Ok(_) => Err("empty list".into()),
        Err(e) => Err(format!("`{s}`: {e}")),
    }
}

fn parse_gap(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected start:end, got `{s}`"))?;
    let a: f64 = a.trim().parse().map_err(|e| format!("`{a}`: {e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("`{b}`: {e}"))?;
    if !(a < b) {
        return Err(format!("start {a} must precede end {b}"));
    }
    Ok((a, b))
}

/// `exp:VAR` with a 1-based variable index, returned 0-based.
fn parse_nonlinear(s: &str) -> Result<usize, String> {
    let (kind, var) = s.split_once(':').ok_or_else(|| format!("expected exp:VAR, got `{s}`"))?;
    if !kind.eq_ignore_ascii_case("exp") {
        return Err(format!("unknown nonlinear term `{kind}`"));
    }
    match var.trim().parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v - 1),
        _ => Err(format!("variable index must be a positive integer, got `{var}`")),
    }
}
