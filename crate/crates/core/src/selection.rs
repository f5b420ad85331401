//! Information criteria, adaptive pruning and the hyperparameter search.
//!
//! [`select_model`] alternates between an unpenalized fit, which scores a
//! mask through the information criterion, and a penalized fit, whose
//! coefficient magnitudes decide which terms to prune next. Blocks of `k0`
//! terms are removed while the criterion improves; after the first
//! rejection single terms are tried, and if that fails straight away terms
//! removed by the last accepted block are added back one at a time.
//!
//! [`hyperparameter_search`] runs the whole procedure over a grid of data
//! and sparsity weights with every third sample held out, and ranks the
//! resulting models by their error on the held-out samples.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discrete::{LossWeights, Observations, StateGrid};
use crate::error::{invalid, Error, Result};
use crate::harness::interpolate_states;
use crate::library::{CandidateLibrary, CoefficientState};
use crate::lm::{minimize, LmConfig, Termination};
use crate::objective::HybridObjective;

/// Smallest fit value passed to the logarithm.
pub const FIT_FLOOR: f64 = 1e-300;

fn floored(fit: f64) -> Result<f64> {
    if fit.is_nan() {
        return Err(Error::NonFinite("fit"));
    }
    if fit <= 0.0 {
        log::warn!("nonpositive fit {fit:e}; flooring at {FIT_FLOOR:e}");
        return Ok(FIT_FLOOR);
    }
    Ok(fit)
}

/// `ln(n̂)·d + n̂·ln(F)`.
pub fn bic(d: usize, fit: f64, n_hat: usize) -> Result<f64> {
    if n_hat == 0 {
        return Err(invalid("information criterion needs at least one observation"));
    }
    let nh = n_hat as f64;
    Ok(nh.ln() * d as f64 + nh * floored(fit)?.ln())
}

/// `2·d + n̂·ln(F)`.
pub fn aic(d: usize, fit: f64, n_hat: usize) -> Result<f64> {
    if n_hat == 0 {
        return Err(invalid("information criterion needs at least one observation"));
    }
    Ok(2.0 * d as f64 + n_hat as f64 * floored(fit)?.ln())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    #[default]
    Bic,
    Aic,
}

impl Criterion {
    pub fn score(self, d: usize, fit: f64, n_hat: usize) -> Result<f64> {
        match self {
            Criterion::Bic => bic(d, fit, n_hat),
            Criterion::Aic => aic(d, fit, n_hat),
        }
    }
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bic" => Ok(Criterion::Bic),
            "aic" => Ok(Criterion::Aic),
            other => Err(invalid(format!("unknown criterion `{other}`"))),
        }
    }
}

/// Upper bound on pruning iterations, `⌈p/k0⌉ + k0 + 1`.
pub fn iteration_bound(p: usize, k0: usize) -> usize {
    p.div_ceil(k0.max(1)) + k0 + 1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Forward,
    Backward,
}

/// Settings shared by every pruning run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub k0: usize,
    pub criterion: Criterion,
    pub lm: LmConfig,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            k0: 5,
            criterion: Criterion::Bic,
            lm: LmConfig::default(),
        }
    }
}

/// Library, grid and training data for one fit.
#[derive(Clone, Copy, Debug)]
pub struct Problem<'a> {
    pub lib: &'a CandidateLibrary,
    pub grid: &'a StateGrid,
    pub obs: &'a Observations,
}

/// A fitted model on the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    /// Grid states, row-major `n × d`.
    pub states: Vec<f64>,
    pub coeffs: CoefficientState,
    /// Undivided fit at this model.
    pub fit: f64,
    pub score: f64,
    /// Fitted degrees of freedom (active coefficients plus active inner
    /// parameters).
    pub dof: usize,
}

/// One tested mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub iter: usize,
    pub mode: Mode,
    pub k: usize,
    pub mask: Vec<bool>,
    pub active: usize,
    pub score: f64,
    pub fit: f64,
    pub accepted: bool,
    pub lm_iters: usize,
    pub penalized_lm_iters: usize,
    pub termination: Option<Termination>,
    /// Optimizer error, if the fit failed.
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub records: Vec<SelectionRecord>,
}

impl SelectionTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Best score among accepted records.
    pub fn best_score(&self) -> f64 {
        self.records
            .iter()
            .filter(|r| r.accepted)
            .map(|r| r.score)
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub model: FittedModel,
    pub trace: SelectionTrace,
}

struct Solve {
    states: Vec<f64>,
    coeffs: CoefficientState,
    fit: f64,
    dof: usize,
    lm_iters: usize,
    termination: Termination,
}

fn solve_masked(problem: &Problem, weights: LossWeights, mask: &[bool], states: &[f64], start: &CoefficientState, lm: &LmConfig) -> Result<Solve> {
    let mut obj = HybridObjective::new(problem.lib, problem.grid, problem.obs, mask, &start.inner, weights)?;
    let mut init = start.clone();
    init.set_mask(mask.to_vec())?;
    let x0 = obj.pack(states, &init)?;
    let res = minimize(&mut obj, &x0, lm)?;
    let fit = obj.unnormalized_fit(&res.x)?;
    let (states, coeffs) = obj.unpack(&res.x);
    let dof = obj.layout().num_params();
    Ok(Solve {
        states,
        coeffs,
        fit,
        dof,
        lm_iters: res.trace.len(),
        termination: res.termination,
    })
}

/// Terms to drop in forward mode: the `k` active entries of `mask` with
/// smallest `|theta|`, ties to the lower index.
fn prune(mask: &[bool], theta: &[f64], k: usize) -> Vec<bool> {
    let mut active: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    active.sort_by(|&a, &b| theta[a].abs().total_cmp(&theta[b].abs()).then(a.cmp(&b)));
    let mut out = mask.to_vec();
    for &i in active.iter().take(k) {
        out[i] = false;
    }
    out
}

/// Adds back the `k` entries active in `reference` but masked in `mask`
/// with the largest `|theta|`, ties to the lower index.
fn restore(mask: &[bool], reference: &[bool], theta: &[f64], k: usize) -> Vec<bool> {
    let mut cand: Vec<usize> = (0..mask.len()).filter(|&i| reference[i] && !mask[i]).collect();
    cand.sort_by(|&a, &b| theta[b].abs().total_cmp(&theta[a].abs()).then(a.cmp(&b)));
    let mut out = mask.to_vec();
    for &i in cand.iter().take(k) {
        out[i] = true;
    }
    out
}

struct Accepted {
    mask: Vec<bool>,
    /// Penalized coefficients of the same iteration.
    dagger: Vec<f64>,
    /// Unpenalized coefficients.
    theta: Vec<f64>,
}

/// Adaptive pruning for fixed weights.
///
/// `states` and `init` give the starting point; the starting mask is the
/// mask of `init`.
pub fn select_model(problem: &Problem, weights: LossWeights, cfg: &SelectionConfig, states: &[f64], init: &CoefficientState) -> Result<SelectionResult> {
    weights.validate()?;
    if cfg.k0 == 0 {
        return Err(invalid("k0 must be at least 1"));
    }
    let n_hat = problem.obs.count_available();
    let p = init.mask().len();
    let bound = iteration_bound(p, cfg.k0);
    let unpen = weights.unpenalized();

    let mut trial_mask = init.mask().to_vec();
    let mut mode = Mode::Forward;
    let mut adaptive = true;
    let mut k = cfg.k0;
    let mut best: Option<FittedModel> = None;
    let mut best_score = f64::INFINITY;
    let mut history: Vec<Accepted> = Vec::new();
    // accepted iteration used as the reference for adding terms back
    let mut reference: Option<usize> = None;
    let mut trace = SelectionTrace::default();

    for iter in 0..bound {
        let (start_states, start) = match &best {
            Some(b) => {
                let mut c = b.coeffs.clone();
                c.set_mask(vec![true; p])?;
                // re-added terms start from their last unpenalized value
                if let Some(r) = reference {
                    for (i, &m) in trial_mask.iter().enumerate() {
                        if m && !b.coeffs.mask()[i] {
                            let (eq, term) = (i / init.num_terms(), i % init.num_terms());
                            c.set(eq, term, history[r].theta[i]);
                        }
                    }
                }
                (b.states.as_slice(), c)
            }
            None => (states, init.clone()),
        };
        let (a, b) = rayon::join(
            || solve_masked(problem, unpen, &trial_mask, start_states, &start, &cfg.lm),
            || solve_masked(problem, weights, &trial_mask, start_states, &start, &cfg.lm),
        );
        let active = trial_mask.iter().filter(|&&m| m).count();
        let mut record = SelectionRecord {
            iter,
            mode,
            k,
            mask: trial_mask.clone(),
            active,
            score: f64::INFINITY,
            fit: f64::NAN,
            accepted: false,
            lm_iters: 0,
            penalized_lm_iters: 0,
            termination: None,
            error: None,
        };
        let mut candidate = None;
        match (a, b) {
            (Ok(u), Ok(pen)) => {
                record.fit = u.fit;
                record.lm_iters = u.lm_iters;
                record.penalized_lm_iters = pen.lm_iters;
                record.termination = Some(u.termination);
                match cfg.criterion.score(u.dof, u.fit, n_hat) {
                    Ok(s) => {
                        record.score = s;
                        candidate = Some((u, pen));
                    }
                    Err(e) => record.error = Some(e.to_string()),
                }
            }
            (Err(e), _) | (_, Err(e)) => {
                log::debug!("fit failed at iteration {iter}: {e}");
                record.error = Some(e.to_string());
            }
        }

        let improved = record.score < best_score;
        if improved {
            let (u, pen) = candidate.expect("finite score implies a solution");
            record.accepted = true;
            best_score = record.score;
            if mode == Mode::Forward {
                reference = history.len().checked_sub(1).or(reference);
            }
            history.push(Accepted {
                mask: trial_mask.clone(),
                dagger: pen.coeffs.theta().to_vec(),
                theta: u.coeffs.theta().to_vec(),
            });
            best = Some(FittedModel {
                states: u.states,
                coeffs: u.coeffs,
                fit: u.fit,
                score: record.score,
                dof: u.dof,
            });
            if adaptive && k == 1 {
                adaptive = false;
            }
        } else if adaptive && k > 1 {
            k = 1;
        } else if adaptive && k == 1 {
            mode = Mode::Backward;
            adaptive = false;
        } else {
            trace.records.push(record);
            break;
        }
        trace.records.push(record);

        let Some(cur) = best.as_ref() else {
            // the very first fit failed; nothing to refine
            break;
        };
        let best_mask = cur.coeffs.mask();
        let next = match mode {
            Mode::Forward => {
                let last = history.last().expect("a best model exists");
                prune(best_mask, &last.dagger, k)
            }
            Mode::Backward => match reference {
                Some(r) => restore(best_mask, &history[r].mask, &history[r].dagger, k),
                None => best_mask.to_vec(),
            },
        };
        if next == best_mask {
            break;
        }
        trial_mask = next;
    }
    let model = best.ok_or(Error::AllCellsFailed)?;
    Ok(SelectionResult { model, trace })
}

/// Decades of data and sparsity weights, plus the hold-out stride.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperGrid {
    pub lambdas: Vec<f64>,
    pub rs: Vec<f64>,
    /// Samples with `index % stride == stride - 1` are held out.
    pub validation_stride: usize,
}

impl Default for HyperGrid {
    fn default() -> Self {
        HyperGrid {
            lambdas: (-3..=3).map(|e| 10f64.powi(e)).collect(),
            rs: (-4..=0).map(|e| 10f64.powi(e)).collect(),
            validation_stride: 3,
        }
    }
}

impl HyperGrid {
    pub fn cells(&self) -> Vec<(f64, f64)> {
        self.lambdas.iter().flat_map(|&l| self.rs.iter().map(move |&r| (l, r))).collect()
    }

    /// Training and validation availability masks.
    pub fn split(&self, obs: &Observations) -> Result<(Observations, Observations)> {
        let s = self.validation_stride;
        if s < 2 {
            return Err(invalid("validation stride must be at least 2"));
        }
        let d = obs.dim();
        let held: Vec<bool> = (0..obs.len() * d).map(|e| (e / d) % s == s - 1).collect();
        let train: Vec<bool> = obs.available().iter().zip(&held).map(|(&a, &h)| a && !h).collect();
        let valid: Vec<bool> = obs.available().iter().zip(&held).map(|(&a, &h)| a && h).collect();
        Ok((obs.restricted(&train)?, obs.restricted(&valid)?))
    }
}

/// Settings of the full discovery pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscoveryConfig {
    pub grid: HyperGrid,
    pub selection: SelectionConfig,
    pub epsilon: f64,
    pub refinement: usize,
    /// Starting value of every inner parameter.
    pub inner_init: f64,
    /// Starting value of every normalized coefficient.
    pub theta_init: f64,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        DiscoveryConfig {
            grid: HyperGrid::default(),
            selection: SelectionConfig::default(),
            epsilon: LossWeights::DEFAULT_EPSILON,
            refinement: 1,
            inner_init: -1.0,
            theta_init: 1.0,
        }
    }
}

/// Outcome of one `(λ, R)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub lambda: f64,
    pub r: f64,
    pub validation_error: f64,
    pub result: Option<SelectionResult>,
    pub error: Option<String>,
    pub seconds: f64,
}

/// Ranked cells plus everything needed to interpret their models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discovery {
    /// Normalized library the coefficients refer to.
    pub library: CandidateLibrary,
    /// Grid (values hold the interpolated starting state).
    pub grid: StateGrid,
    /// Cells sorted by validation error, failures last.
    pub cells: Vec<CellOutcome>,
}

impl Discovery {
    pub fn best(&self) -> Option<&CellOutcome> {
        self.cells.first().filter(|c| c.result.is_some())
    }

    /// Best model's states at the observation samples.
    pub fn best_sampled_states(&self) -> Option<Vec<f64>> {
        let model = &self.best()?.result.as_ref()?.model;
        let d = self.grid.dim();
        Some(
            self.grid
                .data_index()
                .iter()
                .flat_map(|&i| model.states[i * d..(i + 1) * d].iter().copied())
                .collect(),
        )
    }
}

fn validation_error(grid: &StateGrid, valid: &Observations, states: &[f64]) -> f64 {
    let d = grid.dim();
    let mut err = 0.0;
    for (j, &row) in grid.data_index().iter().enumerate() {
        for c in 0..d {
            if let Some(v) = valid.value(j, c) {
                let e = v - states[row * d + c];
                err += e * e;
            }
        }
    }
    err
}

/// Runs adaptive pruning on every grid cell and ranks the models by their
/// error on the held-out samples. Each cell starts from the interpolated
/// training data and all coefficients at `theta_init`.
pub fn hyperparameter_search(obs: &Observations, lib: &CandidateLibrary, cfg: &DiscoveryConfig) -> Result<Discovery> {
    let cells = cfg.grid.cells();
    if cells.is_empty() {
        return Err(invalid("hyperparameter grid is empty"));
    }
    if lib.state_dim() != obs.dim() {
        return Err(Error::Dimension {
            what: "library state dimension",
            expected: obs.dim(),
            got: lib.state_dim(),
        });
    }
    let (train, valid) = cfg.grid.split(obs)?;
    let grid = StateGrid::build(obs.times(), obs.dim(), cfg.refinement)?;
    let start_states = interpolate_states(&train, grid.times())?;
    let inner = vec![cfg.inner_init; lib.num_inner()];
    let lib = lib.normalized(&start_states, &inner)?;
    let grid = grid.with_values(start_states)?;
    let init = CoefficientState::filled(lib.state_dim(), lib.len(), cfg.theta_init, inner, true);
    let problem = Problem {
        lib: &lib,
        grid: &grid,
        obs: &train,
    };

    let mut outcomes: Vec<CellOutcome> = cells
        .par_iter()
        .map(|&(lambda, r)| {
            let t0 = Instant::now();
            let res = LossWeights::new(lambda, r, cfg.epsilon).and_then(|w| select_model(&problem, w, &cfg.selection, &grid.values, &init));
            let seconds = t0.elapsed().as_secs_f64();
            match res {
                Ok(sel) => CellOutcome {
                    lambda,
                    r,
                    validation_error: validation_error(&grid, &valid, &sel.model.states),
                    result: Some(sel),
                    error: None,
                    seconds,
                },
                Err(e) => {
                    log::warn!("cell λ={lambda:e}, R={r:e} failed: {e}");
                    CellOutcome {
                        lambda,
                        r,
                        validation_error: f64::INFINITY,
                        result: None,
                        error: Some(e.to_string()),
                        seconds,
                    }
                }
            }
        })
        .collect();
    if outcomes.iter().all(|c| c.result.is_none()) {
        return Err(Error::AllCellsFailed);
    }
    outcomes.sort_by(|a, b| {
        a.result
            .is_none()
            .cmp(&b.result.is_none())
            .then(a.validation_error.total_cmp(&b.validation_error))
    });
    Ok(Discovery {
        library: lib,
        grid,
        cells: outcomes,
    })
}

/// Relative errors and support agreement of a recovered model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub re_theta: f64,
    pub re_u: f64,
    pub tpr: f64,
}

/// `‖a - b‖_F / ‖b‖_F`.
pub fn relative_error(est: &[f64], truth: &[f64]) -> Result<f64> {
    if est.len() != truth.len() {
        return Err(Error::Dimension {
            what: "compared arrays",
            expected: truth.len(),
            got: est.len(),
        });
    }
    let norm: f64 = truth.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(invalid("ground truth has zero norm"));
    }
    let diff: f64 = est.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    Ok(diff / norm)
}

/// `TP / (TP + FN + FP)` on the nonzero pattern.
pub fn true_positivity(est: &[f64], truth: &[f64]) -> Result<f64> {
    if est.len() != truth.len() {
        return Err(Error::Dimension {
            what: "compared supports",
            expected: truth.len(),
            got: est.len(),
        });
    }
    let (mut tp, mut other) = (0usize, 0usize);
    for (a, b) in est.iter().zip(truth) {
        match (*a != 0.0, *b != 0.0) {
            (true, true) => tp += 1,
            (false, false) => {}
            _ => other += 1,
        }
    }
    if tp + other == 0 {
        return Err(invalid("both supports are empty"));
    }
    Ok(tp as f64 / (tp + other) as f64)
}

/// Relative coefficient and state errors and TPR, all in original units.
pub fn metrics(theta: &[f64], theta_true: &[f64], u: &[f64], u_true: &[f64]) -> Result<Metrics> {
    Ok(Metrics {
        re_theta: relative_error(theta, theta_true)?,
        re_u: relative_error(u, u_true)?,
        tpr: true_positivity(theta, theta_true)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bic_examples() {
        assert_relative_eq!(bic(3, 2.0, 100).unwrap(), 3.0 * 100f64.ln() + 100.0 * 2f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(bic(3, 2.0, 100).unwrap(), 83.130, epsilon = 1e-3);
        assert_relative_eq!(bic(4, 2.0, 100).unwrap() - bic(3, 2.0, 100).unwrap(), 100f64.ln(), epsilon = 1e-12);
        assert_eq!(bic(0, 1.0, 50).unwrap(), 0.0);
        assert!(bic(1, 0.0, 10).unwrap().is_finite());
        assert!(bic(1, 1.0, 0).is_err());
        assert_relative_eq!(aic(3, 1.0, 10).unwrap(), 6.0);
    }

    #[test]
    fn bound_examples() {
        assert_eq!(iteration_bound(57, 5), 18);
        assert_eq!(iteration_bound(3, 5), 7);
    }

    #[test]
    fn prune_and_restore_tie_break() {
        let mask = vec![true, true, true, false, true];
        let theta = vec![0.5, -0.1, 0.1, 0.0, 2.0];
        assert_eq!(prune(&mask, &theta, 2), vec![true, false, false, false, true]);
        assert_eq!(prune(&mask, &theta, 1), vec![true, false, true, false, true]);
        let reference = vec![true; 5];
        let cur = vec![true, false, false, false, true];
        assert_eq!(restore(&cur, &reference, &theta, 1), vec![true, true, false, false, true]);
    }

    #[test]
    fn metric_examples() {
        let t = [1.0, 0.0, -2.0, 3.0];
        let m = metrics(&t, &t, &[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!((m.re_theta, m.re_u, m.tpr), (0.0, 0.0, 1.0));
        let twice: Vec<f64> = t.iter().map(|v| 2.0 * v).collect();
        assert_relative_eq!(relative_error(&twice, &t).unwrap(), 1.0);
        assert_eq!(true_positivity(&twice, &t).unwrap(), 1.0);
        // TP=3, FN=0, FP=1
        assert_eq!(true_positivity(&[1.0, 1.0, 1.0, 1.0], &[1.0, 1.0, 1.0, 0.0]).unwrap(), 0.75);
        assert!(relative_error(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn split_every_third() {
        let times: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let obs = Observations::complete(2, times, vec![1.0; 60]).unwrap();
        let (tr, va) = HyperGrid::default().split(&obs).unwrap();
        assert_eq!(va.count_available(), 20);
        assert_eq!(tr.count_available(), 40);
        assert!(tr.available().iter().zip(va.available()).all(|(a, b)| !(a & b)));
        assert_eq!(HyperGrid::default().cells().len(), 35);
    }
}
