mod common;

use common::random_instance;
use odeid::linalg::SymmetricMatrix;
use odeid::lm::{minimize, LmConfig, Objective, Termination};
use odeid::Result;
use proptest::prelude::*;

struct Quadratic {
    n: usize,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Objective for Quadratic {
    fn value(&self, x: &[f64]) -> f64 {
        let n = self.n;
        let mut f = 0.0;
        for i in 0..n {
            f += self.b[i] * x[i];
            for j in 0..n {
                f += 0.5 * x[i] * self.a[i * n + j] * x[j];
            }
        }
        f
    }

    fn derivatives(&mut self, x: &[f64]) -> Result<(Vec<f64>, SymmetricMatrix)> {
        let n = self.n;
        let g = (0..n).map(|i| self.b[i] + (0..n).map(|j| self.a[i * n + j] * x[j]).sum::<f64>()).collect();
        Ok((g, SymmetricMatrix::from_dense(n, &self.a)))
    }
}

struct Rosenbrock;

impl Objective for Rosenbrock {
    fn value(&self, x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    fn derivatives(&mut self, x: &[f64]) -> Result<(Vec<f64>, SymmetricMatrix)> {
        let (a, b) = (x[0], x[1]);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        let h = [2.0 - 400.0 * (b - 3.0 * a * a), -400.0 * a, -400.0 * a, 200.0];
        Ok((g, SymmetricMatrix::from_dense(2, &h)))
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn accepted_steps_strictly_decrease_the_hybrid_loss(seed in 0u64..10_000, d in 1usize..=3, exp in any::<bool>()) {
        let mut inst = random_instance(seed, 8, d, 2, exp);
        let cfg = LmConfig { max_iters: 60, ..LmConfig::default() };
        let x0 = inst.x.clone();
        let f0 = inst.obj.value(&x0).unwrap();
        let r = minimize(&mut inst.obj, &x0, &cfg).unwrap();
        prop_assert!(r.f <= f0);
        for w in r.trace.windows(2) {
            if w[0].accepted {
                prop_assert!(w[1].f < w[0].f);
            } else {
                prop_assert_eq!(w[1].f, w[0].f);
            }
        }
        prop_assert!(r.trace.iter().all(|t| t.alpha >= cfg.alpha_min && t.alpha <= cfg.alpha_max));
    }

    #[test]
    fn one_undamped_step_solves_a_positive_definite_quadratic(seed in 0u64..10_000, n in 1usize..8) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let m: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        // A = M Mᵀ + I
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = (0..n).map(|k| m[i * n + k] * m[j * n + k]).sum::<f64>() + if i == j { 1.0 } else { 0.0 };
            }
        }
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mut q = Quadratic { n, a, b };
        let cfg = LmConfig { alpha_init: 0.0, alpha_min: 0.0, max_iters: 1, ..LmConfig::default() };
        let r = minimize(&mut q, &x0, &cfg).unwrap();
        prop_assert!(r.trace.len() <= 1);
        let (g, _) = q.derivatives(&r.x).unwrap();
        prop_assert!(g.iter().all(|v| v.abs() < 1e-9), "{:?}", g);
    }
}

#[test]
fn rosenbrock_converges_from_several_starts() {
    for start in [[-1.2, 1.0], [2.0, -1.0], [0.0, 0.0], [-3.0, 5.0]] {
        let r = minimize(&mut Rosenbrock, &start, &LmConfig::default()).unwrap();
        assert_eq!(r.termination, Termination::GradientTolerance);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6, "{start:?} -> {:?}", r.x);
    }
}
