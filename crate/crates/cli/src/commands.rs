//! Execution of resolved manifests.

use std::fs;
use std::path::{Path, PathBuf};

use odeid::discrete::Observations;
use odeid::harness::{add_noise_and_drop, run_benchmark, standardize_states, summarize, RunRecord};
use odeid::io::{self, atomic_write, atomic_write_with};
use odeid::library::rescale_coefficients;
use odeid::selection::{hyperparameter_search, relative_error, true_positivity};
use serde::Serialize;

use crate::manifest::{self, BenchmarkManifest, DiscoverManifest, ReportManifest, RunManifest, SimulateManifest};
use crate::CliError;

impl From<odeid::Error> for CliError {
    fn from(e: odeid::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

pub fn execute(m: &RunManifest) -> Result<(), CliError> {
    match m {
        RunManifest::Simulate(s) => simulate(s),
        RunManifest::Discover(d) => discover(d),
        RunManifest::Benchmark(b) => benchmark(b),
        RunManifest::Report(r) => report(r),
    }?;
    let path = m.out().join(manifest::FILE_NAME);
    atomic_write(&path, m.to_toml()?.as_bytes())?;
    Ok(())
}

fn simulate(m: &SimulateManifest) -> Result<(), CliError> {
    let clean = m.system.simulate()?;
    let obs = add_noise_and_drop(&clean, &m.noise)?;
    let lib = m.system.build_library()?;
    let truth = m.system.true_coefficients(&lib)?;
    let out = &m.out;
    atomic_write_with(&out.join("observations.csv"), |w| io::write_observations(w, &obs))?;
    atomic_write_with(&out.join("truth.csv"), |w| io::write_trajectory(w, clean.dim, &clean.times, &clean.values))?;
    atomic_write_with(&out.join("truth_coefficients.csv"), |w| io::write_coefficients(w, &lib, &truth))?;
    atomic_write(&out.join("truth_model.txt"), io::format_equations(&lib, &truth).as_bytes())?;
    println!(
        "{}: {} samples x {} components, {} observed entries -> {}",
        m.system.kind,
        obs.len(),
        obs.dim(),
        obs.count_available(),
        out.display()
    );
    Ok(())
}

fn read_csv(path: &Path) -> Result<Observations, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::Run(format!("cannot read {}: {e}", path.display())))?;
    io::read_observations(file).map_err(|e| CliError::Run(format!("{}: {e}", path.display())))
}

#[derive(Debug, Serialize)]
struct DiscoverMetrics {
    lambda: f64,
    r: f64,
    validation_error: f64,
    score: f64,
    active_terms: usize,
    iterations: usize,
    re_theta: Option<f64>,
    tpr: Option<f64>,
    re_u: Option<f64>,
}

fn discover(m: &DiscoverManifest) -> Result<(), CliError> {
    let raw = read_csv(&m.data)?;
    if raw.dim() != m.library.state_dim {
        return Err(CliError::Run(format!(
            "{} has {} state columns but the library expects {}",
            m.data.display(),
            raw.dim(),
            m.library.state_dim
        )));
    }
    let (obs, scaling) = if m.standardize {
        let (o, s) = standardize_states(&raw)?;
        (o, Some(s))
    } else {
        (raw.clone(), None)
    };
    let lib = m.library.build()?;
    let disc = hyperparameter_search(&obs, &lib, &m.discovery)?;
    let best = disc.best().ok_or(odeid::Error::AllCellsFailed)?;
    let sel = best.result.as_ref().ok_or(odeid::Error::AllCellsFailed)?;
    let coeffs = rescale_coefficients(&sel.model.coeffs, &disc.library, scaling.as_ref())?;
    let d = obs.dim();
    let mut states = sel.model.states.clone();
    if let Some(s) = &scaling {
        for (e, v) in states.iter_mut().enumerate() {
            *v *= s.scales[e % d];
        }
    }

    let mut metrics = DiscoverMetrics {
        lambda: best.lambda,
        r: best.r,
        validation_error: best.validation_error,
        score: sel.model.score,
        active_terms: coeffs.active_count(),
        iterations: sel.trace.len(),
        re_theta: None,
        tpr: None,
        re_u: None,
    };
    if let Some(system) = &m.system {
        match system.true_coefficients(&lib) {
            Ok(truth) => {
                metrics.re_theta = Some(relative_error(coeffs.theta(), truth.theta())?);
                metrics.tpr = Some(true_positivity(coeffs.theta(), truth.theta())?);
            }
            Err(e) => log::warn!("no coefficient metrics: {e}"),
        }
    }
    if let Some(path) = &m.truth {
        let truth = read_csv(path)?;
        let sampled: Vec<f64> = disc.grid.data_index().iter().flat_map(|&i| states[i * d..(i + 1) * d].iter().copied()).collect();
        if truth.values().len() != sampled.len() {
            return Err(CliError::Run(format!("{} does not match the observation times", path.display())));
        }
        metrics.re_u = Some(relative_error(&sampled, truth.values())?);
    }

    let out = &m.out;
    let model = io::format_equations(&disc.library, &coeffs);
    atomic_write(&out.join("model.txt"), model.as_bytes())?;
    atomic_write_with(&out.join("coefficients.csv"), |w| io::write_coefficients(w, &disc.library, &coeffs))?;
    atomic_write_with(&out.join("trace.csv"), |w| io::write_selection_trace(w, &sel.trace))?;
    atomic_write_with(&out.join("hyper.csv"), |w| io::write_hyper_table(w, &disc))?;
    atomic_write_with(&out.join("states.csv"), |w| io::write_trajectory(w, d, disc.grid.times(), &states))?;
    let json = serde_json::to_string_pretty(&metrics).map_err(|e| CliError::Run(e.to_string()))?;
    atomic_write(&out.join("metrics.json"), json.as_bytes())?;
    print!("{model}");
    println!("lambda = {}, R = {}, {} active terms", best.lambda, best.r, metrics.active_terms);
    if let (Some(re), Some(tpr)) = (metrics.re_theta, metrics.tpr) {
        println!("RE(theta) = {re:.4}, TPR = {tpr:.3}");
    }
    if let Some(re) = metrics.re_u {
        println!("RE(u) = {re:.4}");
    }
    Ok(())
}

fn benchmark(m: &BenchmarkManifest) -> Result<(), CliError> {
    let mut records: Vec<RunRecord> = Vec::new();
    for cell in &m.cells {
        let mut cfg = m.config.clone();
        cfg.system = cfg.system.with_sample_interval(cell.sample_interval)?;
        cfg.discovery.refinement = cell.refinement;
        log::info!("{} at sample interval {} refinement {}", cfg.system.kind, cell.sample_interval, cell.refinement);
        records.extend(run_benchmark(&cfg)?.records());
    }
    let failed = records.iter().filter(|r| !r.error.is_empty()).count();
    let out = &m.out;
    atomic_write_with(&out.join("results.csv"), |w| io::write_records(w, &records))?;
    atomic_write_with(&out.join("summary.csv"), |w| io::write_records(w, &summarize(&records)))?;
    println!("{} runs, {} failed -> {}", records.len(), failed, out.display());
    if failed == records.len() {
        return Err(CliError::Run("every run failed".into()));
    }
    if failed > 0 {
        log::warn!("{failed} of {} runs failed; see the error column of results.csv", records.len());
    }
    Ok(())
}

/// `results.csv` files under `dir`, in sorted order.
fn find_results(dir: &Path, found: &mut Vec<PathBuf>) -> std::io::Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            find_results(&p, found)?;
        } else if p.file_name().is_some_and(|n| n == "results.csv") {
            found.push(p);
        }
    }
    Ok(())
}

fn report(m: &ReportManifest) -> Result<(), CliError> {
    let mut files = Vec::new();
    for p in &m.results {
        if p.is_dir() {
            find_results(p, &mut files).map_err(|e| CliError::Run(format!("{}: {e}", p.display())))?;
        } else {
            files.push(p.clone());
        }
    }
    let mut records: Vec<RunRecord> = Vec::new();
    for f in &files {
        let file = fs::File::open(f).map_err(|e| CliError::Run(format!("cannot read {}: {e}", f.display())))?;
        records.extend(io::read_records::<_, RunRecord>(file).map_err(|e| CliError::Run(format!("{}: {e}", f.display())))?);
    }
    if records.is_empty() {
        return Err(CliError::Run("no result records found".into()));
    }
    let summary = summarize(&records);
    atomic_write_with(&m.out.join("summary.csv"), |w| io::write_records(w, &summary))?;
    println!("{} records from {} files, {} summary rows -> {}", records.len(), files.len(), summary.len(), m.out.display());
    Ok(())
}
