//! Batches of discovery runs over noise levels and noise realizations.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::library::{rescale_coefficients, CoefficientState};
use crate::selection::{hyperparameter_search, metrics, DiscoveryConfig, SelectionTrace};

use super::data::{add_noise_and_drop, derive_seed, standardize_states, DropSpec, NoiseSpec};
use super::systems::BenchmarkSystem;
use super::Trajectory;

/// A full noise × realization experiment on one system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub system: BenchmarkSystem,
    /// Noise levels as fractions of each component's standard deviation.
    pub noise_levels: Vec<f64>,
    pub realizations: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub drop: DropSpec,
    #[serde(default)]
    pub discovery: DiscoveryConfig,
}

impl BenchmarkConfig {
    pub fn new(system: BenchmarkSystem, noise_levels: Vec<f64>, realizations: usize, master_seed: u64) -> Self {
        BenchmarkConfig {
            system,
            noise_levels,
            realizations,
            master_seed,
            drop: DropSpec::None,
            discovery: DiscoveryConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if self.noise_levels.is_empty() || self.realizations == 0 {
            return Err(invalid("benchmark needs at least one noise level and one realization"));
        }
        for &level in &self.noise_levels {
            NoiseSpec {
                level,
                seed: 0,
                drop: self.drop,
            }
            .validate()?;
        }
        Ok(())
    }

    /// Noise spec of realization `r` at noise level index `i`.
    pub fn noise_spec(&self, i: usize, r: usize) -> NoiseSpec {
        NoiseSpec {
            level: self.noise_levels[i],
            seed: derive_seed(self.master_seed, i as u64, r as u64),
            drop: self.drop,
        }
    }
}

/// One row of the results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub system: String,
    pub noise_pct: f64,
    pub seed: u64,
    pub lambda: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "RE_theta")]
    pub re_theta: f64,
    #[serde(rename = "RE_u")]
    pub re_u: f64,
    #[serde(rename = "TPR")]
    pub tpr: f64,
    pub bic: f64,
    pub iters: usize,
    pub wall_time: f64,
    pub realization: usize,
    pub sample_interval: f64,
    pub refinement: usize,
    pub error: String,
}

/// A record plus the recovered model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub record: RunRecord,
    /// Winning coefficients in original units.
    pub coefficients: Option<CoefficientState>,
    pub trace: Option<SelectionTrace>,
    /// Inferred states at the sample times in original units.
    pub states: Option<Vec<f64>>,
    /// Pruning iterations of every successful grid cell.
    #[serde(default)]
    pub cell_iterations: Vec<usize>,
}

impl RunOutcome {
    pub fn succeeded(&self) -> bool {
        self.record.error.is_empty()
    }
}

/// Discovers a model from one noisy realization of `clean` and scores it
/// against the system's ground truth.
pub fn run_single(system: &BenchmarkSystem, clean: &Trajectory, noise: &NoiseSpec, cfg: &DiscoveryConfig) -> Result<RunOutcome> {
    let t0 = Instant::now();
    let obs = add_noise_and_drop(clean, noise)?;
    let (obs, scaling) = if system.standardize {
        let (o, s) = standardize_states(&obs)?;
        (o, Some(s))
    } else {
        (obs, None)
    };
    let lib = system.build_library()?;
    let truth = system.true_coefficients(&lib)?;
    let disc = hyperparameter_search(&obs, &lib, cfg)?;
    let best = disc.best().ok_or(Error::AllCellsFailed)?;
    let sel = best.result.as_ref().ok_or(Error::AllCellsFailed)?;
    let coeffs = rescale_coefficients(&sel.model.coeffs, &disc.library, scaling.as_ref())?;
    let mut states = disc.best_sampled_states().ok_or(Error::AllCellsFailed)?;
    if let Some(s) = &scaling {
        let d = s.scales.len();
        for (e, v) in states.iter_mut().enumerate() {
            *v *= s.scales[e % d];
        }
    }
    let m = metrics(coeffs.theta(), truth.theta(), &states, &clean.values)?;
    let record = RunRecord {
        system: system.kind.to_string(),
        noise_pct: noise.level * 100.0,
        seed: noise.seed,
        lambda: best.lambda,
        r: best.r,
        re_theta: m.re_theta,
        re_u: m.re_u,
        tpr: m.tpr,
        bic: sel.model.score,
        iters: sel.trace.len(),
        wall_time: t0.elapsed().as_secs_f64(),
        realization: 0,
        sample_interval: system.sample_interval,
        refinement: cfg.refinement,
        error: String::new(),
    };
    Ok(RunOutcome {
        record,
        coefficients: Some(coeffs),
        trace: Some(sel.trace.clone()),
        states: Some(states),
        cell_iterations: disc.cells.iter().filter_map(|c| c.result.as_ref().map(|r| r.trace.len())).collect(),
    })
}

fn failed_record(system: &BenchmarkSystem, noise: &NoiseSpec, cfg: &DiscoveryConfig, err: &Error, seconds: f64) -> RunRecord {
    RunRecord {
        system: system.kind.to_string(),
        noise_pct: noise.level * 100.0,
        seed: noise.seed,
        lambda: f64::NAN,
        r: f64::NAN,
        re_theta: f64::NAN,
        re_u: f64::NAN,
        tpr: f64::NAN,
        bic: f64::NAN,
        iters: 0,
        wall_time: seconds,
        realization: 0,
        sample_interval: system.sample_interval,
        refinement: cfg.refinement,
        error: err.to_string(),
    }
}

/// All runs of a benchmark in `(noise level, realization)` order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResults {
    pub runs: Vec<RunOutcome>,
}

impl BenchmarkResults {
    pub fn records(&self) -> Vec<RunRecord> {
        self.runs.iter().map(|r| r.record.clone()).collect()
    }

    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| !r.succeeded()).count()
    }
}

/// Runs every `(noise level, realization)` pair concurrently. Failed runs
/// are kept with their error message.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkResults> {
    cfg.validate()?;
    let clean = cfg.system.simulate()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.noise_levels.len()).flat_map(|i| (0..cfg.realizations).map(move |r| (i, r))).collect();
    let runs = jobs
        .par_iter()
        .map(|&(i, r)| {
            let spec = cfg.noise_spec(i, r);
            let t0 = Instant::now();
            let mut out = run_single(&cfg.system, &clean, &spec, &cfg.discovery).unwrap_or_else(|e| {
                log::warn!("{} noise {} realization {r} failed: {e}", cfg.system.kind, spec.level);
                RunOutcome {
                    record: failed_record(&cfg.system, &spec, &cfg.discovery, &e, t0.elapsed().as_secs_f64()),
                    coefficients: None,
                    trace: None,
                    states: None,
                    cell_iterations: Vec::new(),
                }
            });
            out.record.realization = r;
            out
        })
        .collect();
    Ok(BenchmarkResults { runs })
}

/// Sampling intervals paired with the power-of-two refinement factors whose
/// grid spacing `Δt̂ / r` lies within `[dt_min, dt_max]`.
pub fn refinement_plan(sample_intervals: &[f64], dt_min: f64, dt_max: f64) -> Vec<(f64, usize)> {
    let mut plan = Vec::new();
    for &dt_hat in sample_intervals {
        let mut r = 1usize;
        while dt_hat / r as f64 >= dt_min * (1.0 - 1e-9) {
            if dt_hat / r as f64 <= dt_max * (1.0 + 1e-9) {
                plan.push((dt_hat, r));
            }
            r *= 2;
        }
    }
    plan
}

/// Box-plot statistics: quartiles by linear interpolation and whiskers at
/// the most extreme values within 1.5 IQR of the box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl Quartiles {
    /// `None` when no value is finite.
    pub fn of(values: &[f64]) -> Option<Quartiles> {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let q1 = quantile(&v, 0.25);
        let q3 = quantile(&v, 0.75);
        let iqr = q3 - q1;
        let lo = q1 - 1.5 * iqr;
        let hi = q3 + 1.5 * iqr;
        Some(Quartiles {
            median: quantile(&v, 0.5),
            q1,
            q3,
            whisker_low: v.iter().copied().find(|&x| x >= lo).unwrap_or(q1),
            whisker_high: v.iter().rev().copied().find(|&x| x <= hi).unwrap_or(q3),
        })
    }
}

/// Aggregate of the runs sharing a system, noise level, sampling interval
/// and refinement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub system: String,
    pub noise_pct: f64,
    pub sample_interval: f64,
    pub refinement: usize,
    pub runs: usize,
    pub failures: usize,
    pub re_theta_median: f64,
    pub re_theta_q1: f64,
    pub re_theta_q3: f64,
    pub re_theta_whisker_low: f64,
    pub re_theta_whisker_high: f64,
    pub re_u_median: f64,
    pub re_u_q1: f64,
    pub re_u_q3: f64,
    pub re_u_whisker_low: f64,
    pub re_u_whisker_high: f64,
    pub tpr_median: f64,
    pub tpr_q1: f64,
    pub tpr_q3: f64,
    pub tpr_whisker_low: f64,
    pub tpr_whisker_high: f64,
}

/// One summary row per distinct `(system, noise, Δt̂, refinement)`, in order
/// of first appearance.
pub fn summarize(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, f64, f64, usize)> = Vec::new();
    for r in records {
        let key = (r.system.clone(), r.noise_pct, r.sample_interval, r.refinement);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(system, noise_pct, sample_interval, refinement)| {
            let group: Vec<&RunRecord> = records
                .iter()
                .filter(|r| r.system == system && r.noise_pct == noise_pct && r.sample_interval == sample_interval && r.refinement == refinement)
                .collect();
            let ok: Vec<&&RunRecord> = group.iter().filter(|r| r.error.is_empty()).collect();
            let stats = |f: fn(&RunRecord) -> f64| {
                let vals: Vec<f64> = ok.iter().map(|r| f(r)).collect();
                Quartiles::of(&vals).unwrap_or(Quartiles {
                    median: f64::NAN,
                    q1: f64::NAN,
                    q3: f64::NAN,
                    whisker_low: f64::NAN,
                    whisker_high: f64::NAN,
                })
            };
            let th = stats(|r| r.re_theta);
            let u = stats(|r| r.re_u);
            let tp = stats(|r| r.tpr);
            SummaryRow {
                system,
                noise_pct,
                sample_interval,
                refinement,
                runs: group.len(),
                failures: group.len() - ok.len(),
                re_theta_median: th.median,
                re_theta_q1: th.q1,
                re_theta_q3: th.q3,
                re_theta_whisker_low: th.whisker_low,
                re_theta_whisker_high: th.whisker_high,
                re_u_median: u.median,
                re_u_q1: u.q1,
                re_u_q3: u.q3,
                re_u_whisker_low: u.whisker_low,
                re_u_whisker_high: u.whisker_high,
                tpr_median: tp.median,
                tpr_q1: tp.q1,
                tpr_q3: tp.q3,
                tpr_whisker_low: tp.whisker_low,
                tpr_whisker_high: tp.whisker_high,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles_match_linear_interpolation() {
        let q = Quartiles::of(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!(q.median, 3.0);
        assert_eq!(q.q1, 2.0);
        assert_eq!(q.q3, 4.0);
        assert_eq!(q.whisker_low, 1.0);
        assert_eq!(q.whisker_high, 4.0);
        let q = Quartiles::of(&[1.0, 2.0, f64::NAN, 4.0]).unwrap();
        assert_eq!(q.median, 2.0);
        assert_eq!(q.q1, 1.5);
        assert!(Quartiles::of(&[f64::NAN]).is_none());
    }

    #[test]
    fn refinement_plan_covers_range() {
        let plan = refinement_plan(&[0.05, 0.1, 0.2, 0.4], 0.025, 0.4);
        assert_eq!(plan.iter().filter(|p| p.0 == 0.05).count(), 2);
        assert_eq!(plan.iter().filter(|p| p.0 == 0.4).count(), 5);
        assert!(plan.iter().all(|&(h, r)| h / r as f64 >= 0.025 - 1e-12));
    }

    #[test]
    fn summary_one_row_per_noise_level() {
        let base = RunRecord {
            system: "vdp".into(),
            noise_pct: 10.0,
            seed: 0,
            lambda: 1.0,
            r: 1e-2,
            re_theta: 0.1,
            re_u: 0.05,
            tpr: 1.0,
            bic: 0.0,
            iters: 3,
            wall_time: 0.0,
            realization: 0,
            sample_interval: 0.02,
            refinement: 1,
            error: String::new(),
        };
        let mut recs = Vec::new();
        for (i, noise) in [5.0, 10.0, 5.0, 10.0, 10.0].into_iter().enumerate() {
            let mut r = base.clone();
            r.noise_pct = noise;
            r.re_theta = i as f64;
            recs.push(r);
        }
        recs[4].error = "boom".into();
        let rows = summarize(&recs);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].noise_pct, 5.0);
        assert_eq!(rows[0].re_theta_median, 1.0);
        assert_eq!(rows[1].runs, 3);
        assert_eq!(rows[1].failures, 1);
        assert_eq!(rows[1].re_theta_median, 2.0);
    }

    #[test]
    fn seeds_expand_per_cell() {
        let cfg = BenchmarkConfig::new(BenchmarkSystem::van_der_pol(), vec![0.1, 0.2], 3, 42);
        let mut seeds: Vec<u64> = (0..2).flat_map(|i| (0..3).map(move |r| (i, r))).map(|(i, r)| cfg.noise_spec(i, r).seed).collect();
        assert_eq!(cfg.noise_spec(1, 2), cfg.noise_spec(1, 2));
        seeds.sort();
        seeds.dedup();
        assert_eq!(seeds.len(), 6);
    }
}
