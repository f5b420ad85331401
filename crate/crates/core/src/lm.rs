//! Levenberg–Marquardt minimization with an exact sparse Hessian.
//!
//! Each iteration solves `(H + αI) d = -g` with a sparse LDLᵀ factorization,
//! accepts the step when it lowers the objective, and adapts `α` from the
//! ratio `ρ` of actual to predicted decrease.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{LdlSymbolic, SymmetricMatrix};

/// Settings of the minimizer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmConfig {
    pub alpha_init: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub rho_low: f64,
    pub rho_high: f64,
    /// Stop when the max-norm of the gradient drops to this value.
    pub grad_tol: f64,
    pub max_iters: usize,
    pub alpha_min: f64,
    pub alpha_max: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            alpha_init: 1.0,
            tau1: 0.25,
            tau2: 2.0,
            rho_low: 0.25,
            rho_high: 0.75,
            grad_tol: 1e-8,
            max_iters: 500,
            alpha_min: 1e-12,
            alpha_max: 1e12,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.tau1 && self.tau1 < 1.0 && self.tau2 > 1.0) {
            return Err(invalid("need 0 < tau1 < 1 < tau2"));
        }
        if !(self.rho_low < self.rho_high) {
            return Err(invalid("need rho_low < rho_high"));
        }
        if !(0.0 <= self.alpha_min && self.alpha_min <= self.alpha_max && self.alpha_max.is_finite()) {
            return Err(invalid("alpha bounds must satisfy 0 ≤ alpha_min ≤ alpha_max < ∞"));
        }
        if !(self.alpha_init >= self.alpha_min && self.alpha_init <= self.alpha_max) {
            return Err(invalid("alpha_init must lie within the alpha bounds"));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(invalid("grad_tol must be nonnegative"));
        }
        Ok(())
    }
}

/// A twice differentiable objective with a sparse symmetric Hessian.
pub trait Objective {
    /// Objective value; a non-finite value marks an infeasible point.
    fn value(&self, x: &[f64]) -> f64;
    /// Gradient and Hessian at `x`.
    fn derivatives(&mut self, x: &[f64]) -> Result<(Vec<f64>, SymmetricMatrix)>;
}

/// One row of the iteration log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    /// Objective at the start of the iteration.
    pub f: f64,
    pub grad_norm: f64,
    /// Damping used for the step.
    pub alpha: f64,
    pub rho: f64,
    pub accepted: bool,
}

/// Why the minimizer stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    MaxIterations,
    /// A step was rejected with the damping already at its upper bound.
    Stalled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub termination: Termination,
    pub trace: Vec<IterRecord>,
}

fn max_norm(g: &[f64]) -> f64 {
    g.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Minimizes `obj` starting from `x0`.
pub fn minimize<O: Objective + ?Sized>(obj: &mut O, x0: &[f64], cfg: &LmConfig) -> Result<LmResult> {
    cfg.validate()?;
    let mut x = x0.to_vec();
    let mut f = obj.value(&x);
    if !f.is_finite() {
        return Err(Error::NonFinite("objective at the starting point"));
    }
    let mut alpha = cfg.alpha_init;
    let mut trace = Vec::new();
    let mut symbolic: Option<LdlSymbolic> = None;
    let (mut g, mut h) = obj.derivatives(&x)?;
    let mut gnorm = max_norm(&g);
    let mut fresh = true;
    let termination = loop {
        if gnorm <= cfg.grad_tol {
            break Termination::GradientTolerance;
        }
        if trace.len() >= cfg.max_iters {
            break Termination::MaxIterations;
        }
        if !fresh {
            let (g2, h2) = obj.derivatives(&x)?;
            g = g2;
            h = h2;
            gnorm = max_norm(&g);
            fresh = true;
            if gnorm <= cfg.grad_tol {
                break Termination::GradientTolerance;
            }
        }
        if symbolic.as_ref().is_none_or(|s| !s.matches(&h)) {
            symbolic = Some(LdlSymbolic::analyze(&h)?);
        }
        let sym = symbolic.as_ref().expect("set above");
        // factorize, raising α until H + αI is positive definite
        let factor = loop {
            match sym.factor(&h, alpha) {
                Ok(fac) => break fac,
                Err(_) if alpha < cfg.alpha_max => alpha = (alpha * cfg.tau2).max(cfg.alpha_min.max(f64::MIN_POSITIVE)).min(cfg.alpha_max),
                Err(_) => return Err(Error::Factorization { alpha }),
            }
        };
        let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
        let step = factor.solve(&neg_g);
        let predicted = -g.iter().zip(&step).map(|(a, b)| a * b).sum::<f64>() - 0.5 * h.quad_form(&step);
        let x_test: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
        let f_test = obj.value(&x_test);
        let rho = if predicted != 0.0 { (f - f_test) / predicted } else { f64::NAN };
        let accepted = f_test.is_finite() && f_test < f;
        trace.push(IterRecord {
            iter: trace.len(),
            f,
            grad_norm: gnorm,
            alpha,
            rho,
            accepted,
        });
        if accepted {
            x = x_test;
            f = f_test;
            fresh = false;
            if rho < cfg.rho_low {
                alpha = (alpha * cfg.tau2).min(cfg.alpha_max);
            } else if rho > cfg.rho_high {
                alpha = (alpha * cfg.tau1).max(cfg.alpha_min);
            }
        } else {
            if alpha >= cfg.alpha_max {
                break Termination::Stalled;
            }
            alpha = (alpha * cfg.tau2).min(cfg.alpha_max);
        }
    };
    if !fresh {
        let (g2, _) = obj.derivatives(&x)?;
        gnorm = max_norm(&g2);
    }
    Ok(LmResult {
        x,
        f,
        grad_norm: gnorm,
        termination,
        trace,
    })
}

/// Writes a trace as CSV with header `iter,f,grad_norm,alpha,rho,accepted`.
pub fn write_trace_csv<W: Write>(w: W, trace: &[IterRecord]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in trace {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic {
        a: Vec<f64>,
        b: Vec<f64>,
    }

    impl Objective for Quadratic {
        fn value(&self, x: &[f64]) -> f64 {
            let n = self.b.len();
            let mut f = 0.0;
            for i in 0..n {
                for j in 0..n {
                    f += 0.5 * x[i] * self.a[i * n + j] * x[j];
                }
                f -= self.b[i] * x[i];
            }
            f
        }
        fn derivatives(&mut self, x: &[f64]) -> Result<(Vec<f64>, SymmetricMatrix)> {
            let n = self.b.len();
            let g = (0..n).map(|i| (0..n).map(|j| self.a[i * n + j] * x[j]).sum::<f64>() - self.b[i]).collect();
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

    #[test]
    fn norm_squared_converges_to_origin() {
        let mut q = Quadratic {
            a: vec![2.0, 0.0, 0.0, 2.0],
            b: vec![0.0, 0.0],
        };
        let r = minimize(&mut q, &[3.0, 4.0], &LmConfig::default()).unwrap();
        assert!(r.f < 1e-16);
        assert_eq!(r.termination, Termination::GradientTolerance);
    }

    #[test]
    fn rosenbrock() {
        let r = minimize(&mut Rosenbrock, &[-1.2, 1.0], &LmConfig::default()).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6, "{:?}", r.x);
        let accepted: Vec<f64> = r.trace.iter().filter(|t| t.accepted).map(|t| t.f).collect();
        assert!(accepted.windows(2).all(|w| w[1] < w[0]));
        let cfg = LmConfig::default();
        assert!(r.trace.iter().all(|t| t.alpha >= cfg.alpha_min && t.alpha <= cfg.alpha_max));
    }

    #[test]
    fn undamped_newton_step_is_exact() {
        let mut q = Quadratic {
            a: vec![4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0],
            b: vec![1.0, -2.0, 0.5],
        };
        let cfg = LmConfig {
            alpha_init: 0.0,
            alpha_min: 0.0,
            max_iters: 1,
            ..LmConfig::default()
        };
        let r = minimize(&mut q, &[10.0, -3.0, 7.0], &cfg).unwrap();
        let (g, _) = q.derivatives(&r.x).unwrap();
        assert!(max_norm(&g) < 1e-12);
    }

    #[test]
    fn indefinite_start_raises_damping() {
        // saddle Hessian at the start
        struct Quartic;
        impl Objective for Quartic {
            fn value(&self, x: &[f64]) -> f64 {
                x[0].powi(4) - x[0] * x[0] + x[1] * x[1]
            }
            fn derivatives(&mut self, x: &[f64]) -> Result<(Vec<f64>, SymmetricMatrix)> {
                let g = vec![4.0 * x[0].powi(3) - 2.0 * x[0], 2.0 * x[1]];
                Ok((g, SymmetricMatrix::diagonal(&[12.0 * x[0] * x[0] - 2.0, 2.0])))
            }
        }
        let r = minimize(&mut Quartic, &[0.1, 1.0], &LmConfig::default()).unwrap();
        assert!((r.x[0].abs() - 0.5f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn trace_csv_header() {
        let mut buf = Vec::new();
        let rec = IterRecord {
            iter: 0,
            f: 1.0,
            grad_norm: 2.0,
            alpha: 1.0,
            rho: 0.5,
            accepted: true,
        };
        write_trace_csv(&mut buf, &[rec]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("iter,f,grad_norm,alpha,rho,accepted\n0,1.0,2.0,1.0,0.5,true"));
    }
}
