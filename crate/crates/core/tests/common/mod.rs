//! Random small hybrid-loss instances and finite-difference oracles.
#![allow(dead_code)]

use odeid::discrete::{LossWeights, Observations, StateGrid};
use odeid::library::{CandidateLibrary, CoefficientState};
use odeid::objective::HybridObjective;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub obj: HybridObjective,
    pub x: Vec<f64>,
    pub n: usize,
    pub d: usize,
}

/// `samples` observation times, `d` components, a degree-2 library (plus an
/// exponential term when `with_exp`), random mask, coefficients and states.
pub fn random_instance(seed: u64, samples: usize, d: usize, refinement: usize, with_exp: bool) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lib = CandidateLibrary::polynomial(d, 2, true).unwrap();
    if with_exp {
        lib = lib.with_exp(rng.random_range(0..d)).unwrap();
    }
    let p = lib.len();
    let times: Vec<f64> = (0..samples).map(|i| 0.1 * i as f64 + 0.02 * rng.random::<f64>()).collect();
    let grid = StateGrid::build(&times, d, refinement).unwrap();
    let values: Vec<f64> = (0..samples * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let available: Vec<bool> = (0..values.len()).map(|_| rng.random_bool(0.8)).collect();
    let obs = Observations::new(d, times, values, available).unwrap();
    let mut mask: Vec<bool> = (0..d * p).map(|_| rng.random_bool(0.6)).collect();
    mask[0] = true;
    let theta: Vec<f64> = (0..d * p).map(|_| rng.random_range(-0.5..0.5)).collect();
    let inner: Vec<f64> = (0..lib.num_inner()).map(|_| rng.random_range(-1.0..-0.2)).collect();
    let coeffs = CoefficientState::from_parts(d, p, theta, mask.clone(), inner, true).unwrap();
    let w = LossWeights::new(rng.random_range(0.1..10.0), rng.random_range(0.0..0.1), rng.random_range(0.2..1.0)).unwrap();
    let obj = HybridObjective::new(&lib, &grid, &obs, &mask, &coeffs.inner, w).unwrap();
    let states: Vec<f64> = (0..grid.len() * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x = obj.pack(&states, &coeffs).unwrap();
    let n = grid.len();
    Instance { obj, x, n, d }
}

pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|j| {
            y[j] = x[j] + h;
            let fp = f(&y);
            y[j] = x[j] - h;
            let fm = f(&y);
            y[j] = x[j];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Dense row-major Hessian from central differences of the gradient.
pub fn fd_hessian(g: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> Vec<f64> {
    let n = x.len();
    let mut out = vec![0.0; n * n];
    let mut y = x.to_vec();
    for j in 0..n {
        y[j] = x[j] + h;
        let gp = g(&y);
        y[j] = x[j] - h;
        let gm = g(&y);
        y[j] = x[j];
        for i in 0..n {
            out[i * n + j] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    // symmetrize the column differences
    for i in 0..n {
        for j in 0..i {
            let m = 0.5 * (out[i * n + j] + out[j * n + i]);
            out[i * n + j] = m;
            out[j * n + i] = m;
        }
    }
    out
}

pub fn relative_frobenius(a: &[f64], reference: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(reference).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = reference.iter().map(|y| y * y).sum();
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

pub fn max_relative(a: &[f64], reference: &[f64]) -> f64 {
    a.iter()
        .zip(reference)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}
