//! Benchmark systems with their ground-truth coefficient tables.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::library::{CandidateLibrary, CoefficientState, LibraryConfig, Term};

use super::integrate::{integrate, Tolerances};
use super::Trajectory;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Vdp,
    Lorenz,
    Lorenz96,
    Colpitts,
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SystemKind::Vdp => "vdp",
            SystemKind::Lorenz => "lorenz",
            SystemKind::Lorenz96 => "lorenz96",
            SystemKind::Colpitts => "colpitts",
        })
    }
}

impl FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vdp" | "vanderpol" | "van-der-pol" => Ok(SystemKind::Vdp),
            "lorenz" => Ok(SystemKind::Lorenz),
            "lorenz96" | "l96" => Ok(SystemKind::Lorenz96),
            "colpitts" => Ok(SystemKind::Colpitts),
            other => Err(invalid(format!("unknown system `{other}`"))),
        }
    }
}

/// A simulated system: dynamics, initial condition, sampling and the
/// library it is identified against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSystem {
    pub kind: SystemKind,
    /// `vdp: [μ]`, `lorenz: [σ, ρ, β]`, `lorenz96: [F]`,
    /// `colpitts: [α, η, γ, q, a]`.
    pub params: Vec<f64>,
    pub x0: Vec<f64>,
    pub t0: f64,
    pub sample_interval: f64,
    pub samples: usize,
    pub library: LibraryConfig,
    /// Divide each component by its standard deviation before fitting.
    pub standardize: bool,
}

impl BenchmarkSystem {
    /// `μ = 2` from `(0, 2)`, 501 samples at `Δt̂ = 0.02`.
    pub fn van_der_pol() -> Self {
        BenchmarkSystem {
            kind: SystemKind::Vdp,
            params: vec![2.0],
            x0: vec![0.0, 2.0],
            t0: 0.0,
            sample_interval: 0.02,
            samples: 501,
            library: LibraryConfig::polynomial(2, 3, false),
            standardize: false,
        }
    }

    /// Van der Pol sampled at `Δt̂ = 0.04` (201 samples).
    pub fn van_der_pol_coarse() -> Self {
        BenchmarkSystem {
            sample_interval: 0.04,
            samples: 201,
            ..Self::van_der_pol()
        }
    }

    /// `(σ, ρ, β) = (10, 28, 8/3)` from `(-8, 8, 27)`, 501 samples at 0.02.
    pub fn lorenz() -> Self {
        BenchmarkSystem {
            kind: SystemKind::Lorenz,
            params: vec![10.0, 28.0, 8.0 / 3.0],
            x0: vec![-8.0, 8.0, 27.0],
            t0: 0.0,
            sample_interval: 0.02,
            samples: 501,
            library: LibraryConfig::polynomial(3, 3, false),
            standardize: false,
        }
    }

    /// Five variables, `F = 8`, 251 samples at 0.04.
    pub fn lorenz96() -> Self {
        BenchmarkSystem {
            kind: SystemKind::Lorenz96,
            params: vec![8.0],
            x0: vec![8.01, 8.0, 8.0, 8.0, 8.0],
            t0: 0.0,
            sample_interval: 0.04,
            samples: 251,
            library: LibraryConfig::polynomial(5, 2, true),
            standardize: false,
        }
    }

    /// `(α, η, γ, q, a) = (5, 6.2723, 0.0797, 0.6898, -1)` from
    /// `(0.01, 0, 0)`, 500 samples at 0.1, fitted on standardized states.
    pub fn colpitts() -> Self {
        BenchmarkSystem {
            kind: SystemKind::Colpitts,
            params: vec![5.0, 6.2723, 0.0797, 0.6898, -1.0],
            x0: vec![0.01, 0.0, 0.0],
            t0: 0.0,
            sample_interval: 0.1,
            samples: 500,
            library: LibraryConfig::polynomial(3, 2, true).with_exp(0),
            standardize: true,
        }
    }

    /// The same horizon sampled every `dt` (sample count rounded).
    pub fn with_sample_interval(&self, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid("sample interval must be positive"));
        }
        let horizon = (self.samples - 1) as f64 * self.sample_interval;
        let steps = (horizon / dt).round() as usize;
        Ok(BenchmarkSystem {
            sample_interval: dt,
            samples: steps.max(1) + 1,
            ..self.clone()
        })
    }

    pub fn default_for(kind: SystemKind) -> Self {
        match kind {
            SystemKind::Vdp => Self::van_der_pol(),
            SystemKind::Lorenz => Self::lorenz(),
            SystemKind::Lorenz96 => Self::lorenz96(),
            SystemKind::Colpitts => Self::colpitts(),
        }
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (d, np) = match self.kind {
            SystemKind::Vdp => (2, 1),
            SystemKind::Lorenz => (3, 3),
            SystemKind::Lorenz96 => (self.x0.len().max(4), 1),
            SystemKind::Colpitts => (3, 5),
        };
        if self.x0.len() != d {
            return Err(Error::Dimension {
                what: "initial condition",
                expected: d,
                got: self.x0.len(),
            });
        }
        if self.params.len() != np {
            return Err(Error::Dimension {
                what: "system parameters",
                expected: np,
                got: self.params.len(),
            });
        }
        if self.library.state_dim != d {
            return Err(Error::Dimension {
                what: "library state dimension",
                expected: d,
                got: self.library.state_dim,
            });
        }
        if !(self.sample_interval > 0.0) || self.samples < 2 {
            return Err(invalid("need a positive sample interval and at least two samples"));
        }
        Ok(())
    }

    /// Right-hand side `ẋ = f(x)`.
    pub fn rhs(&self, x: &[f64], out: &mut [f64]) {
        let p = &self.params;
        match self.kind {
            SystemKind::Vdp => {
                out[0] = x[1];
                out[1] = p[0] * (1.0 - x[0] * x[0]) * x[1] - x[0];
            }
            SystemKind::Lorenz => {
                out[0] = p[0] * (x[1] - x[0]);
                out[1] = x[0] * (p[1] - x[2]) - x[1];
                out[2] = x[0] * x[1] - p[2] * x[2];
            }
            SystemKind::Lorenz96 => {
                let n = x.len();
                for i in 0..n {
                    let (ip1, im1, im2) = ((i + 1) % n, (i + n - 1) % n, (i + n - 2) % n);
                    out[i] = (x[ip1] - x[im2]) * x[im1] - x[i] + p[0];
                }
            }
            SystemKind::Colpitts => {
                let (alpha, eta, gamma, q, a) = (p[0], p[1], p[2], p[3], p[4]);
                out[0] = alpha * x[2];
                out[1] = eta * (1.0 - (a * x[0]).exp() + x[2]);
                out[2] = -gamma * (x[0] + x[1]) - q * x[2];
            }
        }
    }

    pub fn sample_times(&self) -> Vec<f64> {
        (0..self.samples).map(|i| self.t0 + i as f64 * self.sample_interval).collect()
    }

    /// Noise-free trajectory at the sample times.
    pub fn simulate(&self) -> Result<Trajectory> {
        self.simulate_with(Tolerances::default())
    }

    pub fn simulate_with(&self, tol: Tolerances) -> Result<Trajectory> {
        self.validate()?;
        let times = self.sample_times();
        let values = integrate(|x, o| self.rhs(x, o), &self.x0, &times, tol)?;
        Ok(Trajectory {
            dim: self.dim(),
            times,
            values,
        })
    }

    pub fn build_library(&self) -> Result<CandidateLibrary> {
        self.library.build()
    }

    /// Inner parameter values of the true model (one per library slot).
    pub fn true_inner(&self, lib: &CandidateLibrary) -> Vec<f64> {
        let a = match self.kind {
            SystemKind::Colpitts => self.params[4],
            _ => 0.0,
        };
        vec![a; lib.num_inner()]
    }

    /// Ground-truth coefficients against `lib` in original units.
    pub fn true_coefficients(&self, lib: &CandidateLibrary) -> Result<CoefficientState> {
        let d = self.dim();
        if lib.state_dim() != d {
            return Err(Error::Dimension {
                what: "library state dimension",
                expected: d,
                got: lib.state_dim(),
            });
        }
        let mut entries: Vec<(usize, Term, f64)> = Vec::new();
        let mono = |e: &[u32]| Term::monomial(e.to_vec());
        let unit = |i: usize| {
            let mut e = vec![0u32; d];
            e[i] += 1;
            e
        };
        let pair = |i: usize, j: usize| {
            let mut e = vec![0u32; d];
            e[i] += 1;
            e[j] += 1;
            e
        };
        let p = &self.params;
        match self.kind {
            SystemKind::Vdp => {
                let mu = p[0];
                entries.push((0, mono(&unit(1)), 1.0));
                entries.push((1, mono(&unit(0)), -1.0));
                entries.push((1, mono(&unit(1)), mu));
                entries.push((1, mono(&[2, 1]), -mu));
            }
            SystemKind::Lorenz => {
                let (s, r, b) = (p[0], p[1], p[2]);
                entries.push((0, mono(&unit(0)), -s));
                entries.push((0, mono(&unit(1)), s));
                entries.push((1, mono(&unit(0)), r));
                entries.push((1, mono(&unit(1)), -1.0));
                entries.push((1, mono(&pair(0, 2)), -1.0));
                entries.push((2, mono(&pair(0, 1)), 1.0));
                entries.push((2, mono(&unit(2)), -b));
            }
            SystemKind::Lorenz96 => {
                for i in 0..d {
                    let (ip1, im1, im2) = ((i + 1) % d, (i + d - 1) % d, (i + d - 2) % d);
                    entries.push((i, mono(&vec![0; d]), p[0]));
                    entries.push((i, mono(&unit(i)), -1.0));
                    entries.push((i, mono(&pair(ip1, im1)), 1.0));
                    entries.push((i, mono(&pair(im2, im1)), -1.0));
                }
            }
            SystemKind::Colpitts => {
                let (alpha, eta, gamma, q) = (p[0], p[1], p[2], p[3]);
                let exp_term = lib
                    .terms()
                    .iter()
                    .find(|t| matches!(t, Term::ParametricExp { var: 0, .. }))
                    .cloned()
                    .ok_or_else(|| invalid("library lacks exp(a*x1)"))?;
                entries.push((0, mono(&unit(2)), alpha));
                entries.push((1, mono(&[0, 0, 0]), eta));
                entries.push((1, exp_term, -eta));
                entries.push((1, mono(&unit(2)), eta));
                entries.push((2, mono(&unit(0)), -gamma));
                entries.push((2, mono(&unit(1)), -gamma));
                entries.push((2, mono(&unit(2)), -q));
            }
        }
        let mut st = CoefficientState::zeros(d, lib.len(), self.true_inner(lib), false);
        for (eq, term, v) in entries {
            let k = lib
                .position(&term)
                .ok_or_else(|| invalid(format!("library lacks the true term {term}")))?;
            st.set(eq, k, st.get(eq, k) + v);
        }
        let mask = st.theta().iter().map(|&v| v != 0.0).collect();
        st.set_mask(mask)?;
        Ok(st)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn truth_tables_reproduce_rhs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in [SystemKind::Vdp, SystemKind::Lorenz, SystemKind::Lorenz96, SystemKind::Colpitts] {
            let sys = BenchmarkSystem::default_for(kind);
            let lib = sys.build_library().unwrap();
            let truth = sys.true_coefficients(&lib).unwrap();
            for _ in 0..20 {
                let x: Vec<f64> = (0..sys.dim()).map(|_| rng.random_range(-3.0..3.0)).collect();
                let mut want = vec![0.0; sys.dim()];
                sys.rhs(&x, &mut want);
                let got = truth.rhs(&lib, &x).unwrap();
                for (a, b) in got.iter().zip(&want) {
                    assert!((a - b).abs() < 1e-12 * b.abs().max(1.0), "{kind}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn default_counts() {
        let counts: Vec<(usize, usize)> = [SystemKind::Vdp, SystemKind::Lorenz, SystemKind::Lorenz96, SystemKind::Colpitts]
            .iter()
            .map(|&k| {
                let s = BenchmarkSystem::default_for(k);
                (s.samples * s.dim(), s.samples)
            })
            .collect();
        assert_eq!(counts, vec![(1002, 501), (1503, 501), (1255, 251), (1500, 500)]);
        let c = BenchmarkSystem::van_der_pol_coarse();
        assert_eq!(c.samples * c.dim(), 402);
    }

    #[test]
    fn resampling_keeps_the_horizon() {
        let v = BenchmarkSystem::van_der_pol();
        let r = v.with_sample_interval(0.05).unwrap();
        assert_eq!(r.samples, 201);
        assert_eq!(v.with_sample_interval(0.4).unwrap().samples, 26);
        assert!(v.with_sample_interval(0.0).is_err());
    }

    #[test]
    fn library_sizes() {
        assert_eq!(BenchmarkSystem::van_der_pol().build_library().unwrap().num_coefficients(), 18);
        assert_eq!(BenchmarkSystem::lorenz().build_library().unwrap().num_coefficients(), 57);
        assert_eq!(BenchmarkSystem::lorenz96().build_library().unwrap().num_coefficients(), 105);
        assert_eq!(BenchmarkSystem::colpitts().build_library().unwrap().num_coefficients(), 33);
    }

    #[test]
    fn names_parse() {
        for k in [SystemKind::Vdp, SystemKind::Lorenz, SystemKind::Lorenz96, SystemKind::Colpitts] {
            assert_eq!(k.to_string().parse::<SystemKind>().unwrap(), k);
        }
        assert!("pendulum".parse::<SystemKind>().is_err());
    }
}
