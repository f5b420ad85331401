//! Computational grid, midpoint residuals and the discrete hybrid loss.
//!
//! For a grid `t_0 < … < t_{n-1}` with states `u_i`, the midpoint residual of
//! interval `i` is
//!
//! ```text
//! N_{i+1/2} = (u_{i+1} - u_i) / Δt_i - f((u_{i+1} + u_i) / 2; θ ⊙ M)
//! ```
//!
//! and the loss is
//!
//! ```text
//! L = (1/n) Σ_i ‖N_{i+1/2}‖² + (λ/n̂) Σ_{(j,c) ∈ D} (û_jc - u_jc)² + (R/k) Σ_active (1 - exp(-θ²/2ε²))
//! ```
//!
//! where `n` is the number of grid points, `n̂` the number of available
//! scalar observations, and `k` the number of active linear coefficients.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::library::{CandidateLibrary, CoefficientState};

/// Sampled data with a per-entry availability mask.
///
/// `values` is row-major (`len × dim`); entries whose mask is `false` are
/// ignored and may hold any value (NaN after CSV ingestion).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observations {
    dim: usize,
    times: Vec<f64>,
    values: Vec<f64>,
    available: Vec<bool>,
}

fn check_increasing(times: &[f64]) -> Result<()> {
    if let Some(i) = times.iter().position(|t| !t.is_finite()) {
        return Err(Error::NotIncreasing(i));
    }
    match times.windows(2).position(|w| w[1] <= w[0]) {
        Some(i) => Err(Error::NotIncreasing(i + 1)),
        None => Ok(()),
    }
}

impl Observations {
    pub fn new(dim: usize, times: Vec<f64>, values: Vec<f64>, available: Vec<bool>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("observations need at least one component"));
        }
        check_increasing(&times)?;
        let expected = times.len() * dim;
        for (what, got) in [("observation values", values.len()), ("availability mask", available.len())] {
            if got != expected {
                return Err(Error::Dimension { what, expected, got });
            }
        }
        if values.iter().zip(&available).any(|(v, &a)| a && !v.is_finite()) {
            return Err(Error::NonFinite("available observation"));
        }
        Ok(Observations {
            dim,
            times,
            values,
            available,
        })
    }

    /// Every entry available.
    pub fn complete(dim: usize, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(dim, times, values, vec![true; n])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of sample times.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn available(&self) -> &[bool] {
        &self.available
    }

    pub fn value(&self, sample: usize, comp: usize) -> Option<f64> {
        let i = sample * self.dim + comp;
        self.available[i].then(|| self.values[i])
    }

    /// Number of available scalar observations `n̂`.
    pub fn count_available(&self) -> usize {
        self.available.iter().filter(|&&a| a).count()
    }

    /// Copy whose availability is the intersection with `keep`.
    pub fn restricted(&self, keep: &[bool]) -> Result<Self> {
        if keep.len() != self.available.len() {
            return Err(Error::Dimension {
                what: "restriction mask",
                expected: self.available.len(),
                got: keep.len(),
            });
        }
        let mut out = self.clone();
        for (a, &k) in out.available.iter_mut().zip(keep) {
            *a = *a && k;
        }
        Ok(out)
    }

    /// Same data with values replaced (availability unchanged).
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.dim, self.times.clone(), values, self.available.clone())
    }
}

/// Time grid and state values `u` (row-major `n × dim`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateGrid {
    dim: usize,
    times: Vec<f64>,
    pub values: Vec<f64>,
    data_index: Vec<usize>,
}

impl StateGrid {
    /// Observation times with each interval split into `refinement` equal
    /// parts; states are zero.
    pub fn build(observation_times: &[f64], dim: usize, refinement: usize) -> Result<Self> {
        if refinement == 0 {
            return Err(invalid("refinement factor must be at least 1"));
        }
        if observation_times.len() < 2 {
            return Err(invalid("need at least two observation times"));
        }
        check_increasing(observation_times)?;
        let mut times = Vec::with_capacity((observation_times.len() - 1) * refinement + 1);
        let mut data_index = Vec::with_capacity(observation_times.len());
        for w in observation_times.windows(2) {
            data_index.push(times.len());
            let h = (w[1] - w[0]) / refinement as f64;
            times.push(w[0]);
            for s in 1..refinement {
                times.push(w[0] + s as f64 * h);
            }
        }
        data_index.push(times.len());
        times.push(*observation_times.last().unwrap());
        let n = times.len();
        Ok(StateGrid {
            dim,
            times,
            values: vec![0.0; n * dim],
            data_index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of grid points `n`.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Grid row of each observation sample.
    pub fn data_index(&self) -> &[usize] {
        &self.data_index
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn with_values(mut self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::Dimension {
                what: "grid state values",
                expected: self.values.len(),
                got: values.len(),
            });
        }
        self.values = values;
        Ok(self)
    }

    /// States at the observation sample times.
    pub fn sampled_values(&self) -> Vec<f64> {
        self.data_index.iter().flat_map(|&i| self.state(i).iter().copied()).collect()
    }
}

/// Weights of the hybrid loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Data-fidelity weight λ.
    pub lambda: f64,
    /// Sparsity weight R.
    pub r: f64,
    /// Width ε of the smooth-L0 penalty.
    pub epsilon: f64,
}

impl LossWeights {
    pub const DEFAULT_EPSILON: f64 = 0.01;

    pub fn new(lambda: f64, r: f64, epsilon: f64) -> Result<Self> {
        let w = LossWeights { lambda, r, epsilon };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(invalid("lambda must be positive"));
        }
        if !(self.r >= 0.0 && self.r.is_finite()) {
            return Err(invalid("R must be nonnegative"));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(invalid("epsilon must be positive"));
        }
        Ok(())
    }

    /// Same weights with the sparsity penalty switched off.
    pub fn unpenalized(&self) -> Self {
        LossWeights { r: 0.0, ..*self }
    }
}

fn check_consistent(grid: &StateGrid, lib: &CandidateLibrary, coeffs: &CoefficientState) -> Result<()> {
    if lib.state_dim() != grid.dim {
        return Err(Error::Dimension {
            what: "library state dimension",
            expected: grid.dim,
            got: lib.state_dim(),
        });
    }
    if coeffs.dim() != grid.dim || coeffs.num_terms() != lib.len() {
        return Err(Error::Dimension {
            what: "coefficient matrix",
            expected: grid.dim * lib.len(),
            got: coeffs.dim() * coeffs.num_terms(),
        });
    }
    if coeffs.inner.len() != lib.num_inner() {
        return Err(Error::Dimension {
            what: "inner parameters",
            expected: lib.num_inner(),
            got: coeffs.inner.len(),
        });
    }
    Ok(())
}

/// Midpoint residual of interval `i` (between grid points `i` and `i+1`).
pub fn midpoint_residual(grid: &StateGrid, lib: &CandidateLibrary, coeffs: &CoefficientState, i: usize) -> Result<Vec<f64>> {
    check_consistent(grid, lib, coeffs)?;
    if i + 1 >= grid.len() {
        return Err(invalid(format!("interval {i} out of range for {} grid points", grid.len())));
    }
    let d = grid.dim;
    let (a, b) = (grid.state(i), grid.state(i + 1));
    let dt = grid.times[i + 1] - grid.times[i];
    let mid: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
    let f = coeffs.rhs(lib, &mid)?;
    Ok((0..d).map(|c| (b[c] - a[c]) / dt - f[c]).collect())
}

/// Smooth-L0 penalty `Σ_active (1 - exp(-θ²/2ε²))`.
pub fn smooth_l0(coeffs: &CoefficientState, epsilon: f64) -> f64 {
    let two_eps2 = 2.0 * epsilon * epsilon;
    coeffs
        .theta()
        .iter()
        .zip(coeffs.mask())
        .filter(|(_, &m)| m)
        .map(|(t, _)| 1.0 - (-t * t / two_eps2).exp())
        .sum()
}

/// The three labelled parts of the discrete loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub model: f64,
    pub data: f64,
    pub penalty: f64,
}

struct RawSums {
    model: f64,
    data: f64,
}

fn raw_sums(grid: &StateGrid, obs: &Observations, lib: &CandidateLibrary, coeffs: &CoefficientState) -> Result<RawSums> {
    check_consistent(grid, lib, coeffs)?;
    if obs.dim() != grid.dim || obs.len() != grid.data_index.len() {
        return Err(Error::Dimension {
            what: "observations vs grid data map",
            expected: grid.data_index.len(),
            got: obs.len(),
        });
    }
    let mut model = 0.0;
    for i in 0..grid.len() - 1 {
        model += midpoint_residual(grid, lib, coeffs, i)?.iter().map(|r| r * r).sum::<f64>();
    }
    let mut data = 0.0;
    for (j, &row) in grid.data_index.iter().enumerate() {
        for c in 0..grid.dim {
            if let Some(v) = obs.value(j, c) {
                let e = v - grid.state(row)[c];
                data += e * e;
            }
        }
    }
    Ok(RawSums { model, data })
}

/// Discrete hybrid loss and its parts.
pub fn loss(grid: &StateGrid, obs: &Observations, lib: &CandidateLibrary, coeffs: &CoefficientState, weights: &LossWeights) -> Result<LossParts> {
    weights.validate()?;
    let sums = raw_sums(grid, obs, lib, coeffs)?;
    let n = grid.len() as f64;
    let n_hat = obs.count_available();
    let k = coeffs.active_count();
    let model = sums.model / n;
    let data = if n_hat > 0 { weights.lambda * sums.data / n_hat as f64 } else { 0.0 };
    let penalty = if k > 0 && weights.r > 0.0 {
        weights.r / k as f64 * smooth_l0(coeffs, weights.epsilon)
    } else {
        0.0
    };
    Ok(LossParts {
        total: model + data + penalty,
        model,
        data,
        penalty,
    })
}

/// Undivided fit `Σ‖N_{i+1/2}‖² + λ Σ_D (û - u)²` used by the information
/// criteria.
pub fn unnormalized_fit(grid: &StateGrid, obs: &Observations, lib: &CandidateLibrary, coeffs: &CoefficientState, lambda: f64) -> Result<f64> {
    let sums = raw_sums(grid, obs, lib, coeffs)?;
    Ok(sums.model + lambda * sums.data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library::Term;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_refinement() {
        let g = StateGrid::build(&[0.0, 0.1, 0.2], 1, 1).unwrap();
        assert_eq!(g.times(), &[0.0, 0.1, 0.2]);
        let g = StateGrid::build(&[0.0, 0.1, 0.2], 1, 2).unwrap();
        let expect = [0.0, 0.05, 0.1, 0.15, 0.2];
        for (a, b) in g.times().iter().zip(expect) {
            assert_relative_eq!(*a, b, epsilon = 1e-15);
        }
        assert_eq!(g.data_index(), &[0, 2, 4]);
        let t: Vec<f64> = (0..6).map(|i| i as f64 * 0.4).collect();
        let g = StateGrid::build(&t, 2, 16).unwrap();
        assert_relative_eq!(g.times()[1] - g.times()[0], 0.025, epsilon = 1e-15);
        assert!(StateGrid::build(&[0.0, 0.2, 0.1], 1, 1).is_err());
        assert!(StateGrid::build(&[0.0, 0.1], 1, 0).is_err());
    }

    #[test]
    fn residual_examples() {
        let lib = CandidateLibrary::polynomial(2, 1, false).unwrap();
        let zero = CoefficientState::zeros(2, 2, vec![], false);
        let g = StateGrid::build(&[0.0, 1.0, 2.0], 2, 1).unwrap().with_values(vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0]).unwrap();
        assert_eq!(midpoint_residual(&g, &lib, &zero, 0).unwrap(), vec![0.0, 0.0]);

        let mut c = CoefficientState::zeros(2, 2, vec![], false);
        c.set(0, 1, 1.0); // x1' = x2
        let g = StateGrid::build(&[0.0, 0.1], 2, 1).unwrap().with_values(vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let r = midpoint_residual(&g, &lib, &c, 0).unwrap();
        assert_relative_eq!(r[0], 9.5, epsilon = 1e-12);
    }

    #[test]
    fn midpoint_exact_for_constant_velocity() {
        // x' = 3 via the constant term, on an irregular grid.
        let lib = CandidateLibrary::polynomial(1, 1, true).unwrap();
        let mut c = CoefficientState::zeros(1, 2, vec![], false);
        c.set(0, 0, 3.0);
        let t = [0.0, 0.13, 0.5, 0.51, 1.7];
        let u: Vec<f64> = t.iter().map(|t| 1.0 + 3.0 * t).collect();
        let g = StateGrid::build(&t, 1, 1).unwrap().with_values(u).unwrap();
        for i in 0..4 {
            assert!(midpoint_residual(&g, &lib, &c, i).unwrap()[0].abs() < 1e-12);
        }
    }

    #[test]
    fn smooth_l0_examples() {
        let eps = 0.01;
        let zero = CoefficientState::zeros(1, 3, vec![], true);
        assert_eq!(smooth_l0(&zero, eps), 0.0);
        let one = CoefficientState::from_parts(1, 3, vec![eps, 0.0, 0.0], vec![true; 3], vec![], true).unwrap();
        assert_relative_eq!(smooth_l0(&one, eps), 1.0 - (-0.5f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(smooth_l0(&one, eps), 0.39347, epsilon = 1e-5);
        let big = CoefficientState::from_parts(1, 3, vec![10.0 * eps, -20.0 * eps, 0.0], vec![true; 3], vec![], true).unwrap();
        assert!((smooth_l0(&big, eps) - 2.0).abs() < 1e-21 + 2.0 * f64::EPSILON);
        let masked = CoefficientState::from_parts(1, 3, vec![1.0, 1.0, 1.0], vec![true, false, false], vec![], true).unwrap();
        assert_eq!(smooth_l0(&masked, eps), 1.0);
    }

    #[test]
    fn zero_loss_on_exact_fit() {
        let lib = CandidateLibrary::polynomial(1, 2, false).unwrap();
        let c = CoefficientState::zeros(1, 2, vec![], true);
        let t = [0.0, 0.5, 1.0];
        let obs = Observations::complete(1, t.to_vec(), vec![2.0; 3]).unwrap();
        let g = StateGrid::build(&t, 1, 1).unwrap().with_values(vec![2.0; 3]).unwrap();
        let w = LossWeights::new(3.0, 0.5, 0.01).unwrap();
        let l = loss(&g, &obs, &lib, &c, &w).unwrap();
        assert_eq!((l.total, l.model, l.data, l.penalty), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(unnormalized_fit(&g, &obs, &lib, &c, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn rejects_mismatched_dimensions() {
        let lib = CandidateLibrary::polynomial(2, 1, false).unwrap();
        let c = CoefficientState::zeros(2, 2, vec![], true);
        let obs = Observations::complete(2, vec![0.0, 1.0, 2.0], vec![0.0; 6]).unwrap();
        let g = StateGrid::build(&[0.0, 1.0], 2, 1).unwrap();
        assert!(loss(&g, &obs, &lib, &c, &LossWeights::new(1.0, 0.0, 0.01).unwrap()).is_err());
        let lib3 = CandidateLibrary::polynomial(3, 1, false).unwrap();
        let g = StateGrid::build(&[0.0, 1.0, 2.0], 2, 1).unwrap();
        assert!(loss(&g, &obs, &lib3, &c, &LossWeights::new(1.0, 0.0, 0.01).unwrap()).is_err());
    }

    /// Brute-force oracle: every sum written out from the definitions with
    /// explicit monomial evaluation.
    fn oracle_loss(t: &[f64], u: &[f64], d: usize, obs: &Observations, exps: &[Vec<u32>], scales: &[f64], theta: &[f64], mask: &[bool], w: &LossWeights) -> (f64, f64, f64, f64) {
        let n = t.len();
        let p = exps.len();
        let mut model = 0.0;
        for i in 0..n - 1 {
            for c in 0..d {
                let mut f = 0.0;
                for k in 0..p {
                    if !mask[c * p + k] {
                        continue;
                    }
                    let mut term = 1.0;
                    for (j, &e) in exps[k].iter().enumerate() {
                        let m = 0.5 * (u[i * d + j] + u[(i + 1) * d + j]);
                        for _ in 0..e {
                            term *= m;
                        }
                    }
                    f += theta[c * p + k] * term / scales[k];
                }
                let r = (u[(i + 1) * d + c] - u[i * d + c]) / (t[i + 1] - t[i]) - f;
                model += r * r;
            }
        }
        let mut data = 0.0;
        let mut nhat = 0;
        for j in 0..obs.len() {
            for c in 0..d {
                if obs.available()[j * d + c] {
                    nhat += 1;
                    let e = obs.values()[j * d + c] - u[j * d + c];
                    data += e * e;
                }
            }
        }
        let mut pen = 0.0;
        let mut k = 0;
        for (th, &m) in theta.iter().zip(mask) {
            if m {
                k += 1;
                pen += 1.0 - (-th * th / (2.0 * w.epsilon * w.epsilon)).exp();
            }
        }
        let model_e = model / n as f64;
        let data_e = w.lambda * data / nhat as f64;
        let pen_e = w.r * pen / k as f64;
        (model_e + data_e + pen_e, model_e, data_e, pen_e)
    }

    #[test]
    fn loss_matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..25 {
            let d = rng.random_range(1..=3);
            let n = rng.random_range(2..=9);
            let lib = CandidateLibrary::polynomial(d, 2, true).unwrap();
            let p = lib.len();
            let scales: Vec<f64> = (0..p).map(|_| rng.random_range(0.5..3.0)).collect();
            let lib = lib.with_scales(scales.clone()).unwrap();
            let mut t = vec![0.0];
            for _ in 1..n {
                t.push(t.last().unwrap() + rng.random_range(0.05..0.3));
            }
            let u: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let vals: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut avail: Vec<bool> = (0..n * d).map(|_| rng.random_bool(0.7)).collect();
            avail[0] = true;
            let theta: Vec<f64> = (0..d * p).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut mask: Vec<bool> = (0..d * p).map(|_| rng.random_bool(0.6)).collect();
            mask[0] = true;
            let obs = Observations::new(d, t.clone(), vals, avail).unwrap();
            let g = StateGrid::build(&t, d, 1).unwrap().with_values(u.clone()).unwrap();
            let coeffs = CoefficientState::from_parts(d, p, theta.clone(), mask.clone(), vec![], true).unwrap();
            let w = LossWeights::new(rng.random_range(0.1..10.0), rng.random_range(0.0..1.0), 0.3).unwrap();
            let exps: Vec<Vec<u32>> = lib
                .terms()
                .iter()
                .map(|t| match t {
                    Term::Monomial { exponents } => exponents.clone(),
                    _ => unreachable!(),
                })
                .collect();
            let masked_theta: Vec<f64> = theta.iter().zip(&mask).map(|(t, &m)| if m { *t } else { 0.0 }).collect();
            let (tot, m, dt, pe) = oracle_loss(&t, &u, d, &obs, &exps, &scales, &masked_theta, &mask, &w);
            let l = loss(&g, &obs, &lib, &coeffs, &w).unwrap();
            assert_relative_eq!(l.total, tot, max_relative = 1e-12);
            assert_relative_eq!(l.model, m, max_relative = 1e-12);
            assert_relative_eq!(l.data, dt, max_relative = 1e-12);
            assert_relative_eq!(l.penalty, pe, max_relative = 1e-12, epsilon = 1e-300);

            // unnormalized fit = n·model + n̂·data (λ already inside data)
            let f = unnormalized_fit(&g, &obs, &lib, &coeffs, w.lambda).unwrap();
            let nh = obs.count_available() as f64;
            assert_relative_eq!(f, n as f64 * l.model + nh * l.data, max_relative = 1e-12);
        }
    }

    #[test]
    fn single_interval_fit_by_hand() {
        // x' = 2 x on one interval: u = (1, 1.5), dt = 0.5, one observation 1.2 at t=0.5.
        let lib = CandidateLibrary::polynomial(1, 1, false).unwrap();
        let c = CoefficientState::from_parts(1, 1, vec![2.0], vec![true], vec![], false).unwrap();
        let obs = Observations::new(1, vec![0.0, 0.5], vec![0.0, 1.2], vec![false, true]).unwrap();
        let g = StateGrid::build(&[0.0, 0.5], 1, 1).unwrap().with_values(vec![1.0, 1.5]).unwrap();
        // residual = (1.5-1)/0.5 - 2*1.25 = 1 - 2.5 = -1.5
        let expected = 1.5 * 1.5 + 4.0 * 0.3 * 0.3;
        assert_relative_eq!(unnormalized_fit(&g, &obs, &lib, &c, 4.0).unwrap(), expected, epsilon = 1e-14);
    }

    #[test]
    fn full_data_touches_each_row_once() {
        let t: Vec<f64> = (0..7).map(|i| i as f64 * 0.1).collect();
        let obs = Observations::complete(1, t.clone(), vec![1.0; 7]).unwrap();
        let g = StateGrid::build(&t, 1, 1).unwrap();
        let mut seen = [0; 7];
        for &r in g.data_index() {
            seen[r] += 1;
        }
        assert!(seen.iter().all(|&s| s == 1));
        assert_eq!(obs.count_available(), 7);
    }

    proptest! {
        #[test]
        fn loss_invariant_under_term_permutation(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let lib = CandidateLibrary::polynomial(2, 2, false).unwrap();
            let p = lib.len();
            let t: Vec<f64> = (0..5).map(|i| i as f64 * 0.2).collect();
            let u: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
            let obs = Observations::complete(2, t.clone(), u.iter().map(|v| v + 0.1).collect()).unwrap();
            let g = StateGrid::build(&t, 2, 1).unwrap().with_values(u).unwrap();
            let theta: Vec<f64> = (0..2 * p).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c = CoefficientState::from_parts(2, p, theta.clone(), vec![true; 2 * p], vec![], true).unwrap();
            let w = LossWeights::new(2.0, 0.3, 0.1).unwrap();
            let base = loss(&g, &obs, &lib, &c, &w).unwrap().total;

            let perm: Vec<usize> = (0..p).rev().collect();
            let terms: Vec<Term> = perm.iter().map(|&k| lib.terms()[k].clone()).collect();
            let plib = CandidateLibrary::from_terms(2, terms, false).unwrap();
            let ptheta: Vec<f64> = (0..2).flat_map(|c| perm.iter().map(move |&k| (c, k))).map(|(c, k)| theta[c * p + k]).collect();
            let pc = CoefficientState::from_parts(2, p, ptheta, vec![true; 2 * p], vec![], true).unwrap();
            let other = loss(&g, &obs, &plib, &pc, &w).unwrap().total;
            prop_assert!((base - other).abs() <= 1e-12 * base.abs().max(1.0));
        }
    }
}
