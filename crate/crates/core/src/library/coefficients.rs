use serde::{Deserialize, Serialize};

use super::{CandidateLibrary, Term};
use crate::error::{invalid, Error, Result};

/// Coefficient matrix `θ` (d×p, row-major), active-term mask and inner
/// parameters.
///
/// Masked-out entries are kept at exactly zero. `scaled` records whether
/// `θ` multiplies the normalized library terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientState {
    dim: usize,
    terms: usize,
    theta: Vec<f64>,
    mask: Vec<bool>,
    pub inner: Vec<f64>,
    pub scaled: bool,
}

impl CoefficientState {
    /// All-active state with every coefficient set to `fill`.
    pub fn filled(dim: usize, terms: usize, fill: f64, inner: Vec<f64>, scaled: bool) -> Self {
        CoefficientState {
            dim,
            terms,
            theta: vec![fill; dim * terms],
            mask: vec![true; dim * terms],
            inner,
            scaled,
        }
    }

    pub fn zeros(dim: usize, terms: usize, inner: Vec<f64>, scaled: bool) -> Self {
        Self::filled(dim, terms, 0.0, inner, scaled)
    }

    /// Builds a state from explicit values; masked entries are zeroed.
    pub fn from_parts(dim: usize, terms: usize, theta: Vec<f64>, mask: Vec<bool>, inner: Vec<f64>, scaled: bool) -> Result<Self> {
        if theta.len() != dim * terms {
            return Err(Error::Dimension {
                what: "coefficient matrix",
                expected: dim * terms,
                got: theta.len(),
            });
        }
        if mask.len() != dim * terms {
            return Err(Error::Dimension {
                what: "mask",
                expected: dim * terms,
                got: mask.len(),
            });
        }
        let mut s = CoefficientState {
            dim,
            terms,
            theta,
            mask,
            inner,
            scaled,
        };
        s.apply_mask();
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_terms(&self) -> usize {
        self.terms
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn get(&self, eq: usize, term: usize) -> f64 {
        self.theta[eq * self.terms + term]
    }

    pub fn is_active(&self, eq: usize, term: usize) -> bool {
        self.mask[eq * self.terms + term]
    }

    /// Sets one coefficient. Writes to masked entries are ignored.
    pub fn set(&mut self, eq: usize, term: usize, value: f64) {
        let i = eq * self.terms + term;
        if self.mask[i] {
            self.theta[i] = value;
        }
    }

    pub fn set_mask(&mut self, mask: Vec<bool>) -> Result<()> {
        if mask.len() != self.mask.len() {
            return Err(Error::Dimension {
                what: "mask",
                expected: self.mask.len(),
                got: mask.len(),
            });
        }
        self.mask = mask;
        self.apply_mask();
        Ok(())
    }

    fn apply_mask(&mut self) {
        for (t, &m) in self.theta.iter_mut().zip(&self.mask) {
            if !m {
                *t = 0.0;
            }
        }
    }

    /// Number of active linear coefficients.
    pub fn active_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Inner parameter slots whose host term is active in some equation.
    pub fn active_inner(&self, lib: &CandidateLibrary) -> Vec<usize> {
        let mut slots: Vec<usize> = lib
            .terms()
            .iter()
            .enumerate()
            .filter_map(|(k, t)| {
                let slot = t.inner_slot()?;
                (0..self.dim).any(|c| self.is_active(c, k)).then_some(slot)
            })
            .collect();
        slots.sort_unstable();
        slots.dedup();
        slots
    }

    /// Value of the masked library combination `f_c(x) = Σ_k θ_ck Ñ_k(x)`.
    pub fn rhs(&self, lib: &CandidateLibrary, x: &[f64]) -> Result<Vec<f64>> {
        let vals = lib.evaluate(x, &self.inner)?;
        Ok((0..self.dim)
            .map(|c| (0..self.terms).map(|k| self.get(c, k) * vals[k]).sum())
            .collect())
    }
}

/// Per-component state standardization `x̄_i = x_i / scale_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateScaling {
    pub scales: Vec<f64>,
}

fn check_compatible(state: &CoefficientState, lib: &CandidateLibrary, scaling: Option<&StateScaling>) -> Result<()> {
    if state.dim != lib.state_dim() || state.terms != lib.len() {
        return Err(invalid("coefficient state does not match the library"));
    }
    if let Some(s) = scaling {
        if s.scales.len() != state.dim {
            return Err(Error::Dimension {
                what: "state scaling",
                expected: state.dim,
                got: s.scales.len(),
            });
        }
    }
    Ok(())
}

/// Factor `g` such that, for term `k` of equation `c`, the original-units
/// coefficient equals `g · θ̄` where `θ̄` is the coefficient against the
/// standardized state.
fn standardization_factor(term: &Term, eq: usize, scales: &[f64]) -> f64 {
    match term {
        Term::Monomial { exponents } => {
            let denom: f64 = exponents.iter().zip(scales).map(|(&e, s)| s.powi(e as i32)).product();
            scales[eq] / denom
        }
        Term::ParametricExp { .. } => scales[eq],
    }
}

/// Converts coefficients expressed against the normalized library (and
/// optionally against standardized states) back to original units:
/// `θ_k = θ̃_k / s_k`, then undoes the state standardization.
pub fn rescale_coefficients(state: &CoefficientState, lib: &CandidateLibrary, scaling: Option<&StateScaling>) -> Result<CoefficientState> {
    if !state.scaled {
        return Err(invalid("coefficients are already in original units"));
    }
    check_compatible(state, lib, scaling)?;
    let mut out = state.clone();
    for c in 0..state.dim {
        for (k, term) in lib.terms().iter().enumerate() {
            let i = c * state.terms + k;
            let mut v = state.theta[i] / lib.scales()[k];
            if let Some(s) = scaling {
                v *= standardization_factor(term, c, &s.scales);
            }
            out.theta[i] = v;
        }
    }
    if let Some(s) = scaling {
        for term in lib.terms() {
            if let Term::ParametricExp { var, inner } = term {
                out.inner[*inner] = state.inner[*inner] / s.scales[*var];
            }
        }
    }
    out.scaled = false;
    Ok(out)
}

/// Inverse of [`rescale_coefficients`].
pub fn scale_coefficients(state: &CoefficientState, lib: &CandidateLibrary, scaling: Option<&StateScaling>) -> Result<CoefficientState> {
    if state.scaled {
        return Err(invalid("coefficients are already scaled"));
    }
    check_compatible(state, lib, scaling)?;
    let mut out = state.clone();
    for c in 0..state.dim {
        for (k, term) in lib.terms().iter().enumerate() {
            let i = c * state.terms + k;
            let mut v = state.theta[i];
            if let Some(s) = scaling {
                v /= standardization_factor(term, c, &s.scales);
            }
            out.theta[i] = v * lib.scales()[k];
        }
    }
    if let Some(s) = scaling {
        for term in lib.terms() {
            if let Term::ParametricExp { var, inner } = term {
                out.inner[*inner] = state.inner[*inner] * s.scales[*var];
            }
        }
    }
    out.scaled = true;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library::LibraryConfig;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn masked_entries_are_zero() {
        let mut s = CoefficientState::filled(2, 3, 1.0, vec![], true);
        s.set_mask(vec![true, false, true, false, false, true]).unwrap();
        assert_eq!(s.theta(), &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        s.set(0, 1, 5.0);
        assert_eq!(s.get(0, 1), 0.0);
        assert_eq!(s.active_count(), 3);
    }

    #[test]
    fn rescale_identity_and_simple() {
        let lib = CandidateLibrary::polynomial(1, 2, false).unwrap();
        let s = CoefficientState::filled(1, 2, 2.0, vec![], true);
        let r = rescale_coefficients(&s, &lib, None).unwrap();
        assert_eq!(r.theta(), &[2.0, 2.0]);
        let lib = lib.with_scales(vec![4.0, 1.0]).unwrap();
        let r = rescale_coefficients(&s, &lib, None).unwrap();
        assert_eq!(r.theta()[0], 0.5);
        assert!(!r.scaled);
        assert!(rescale_coefficients(&r, &lib, None).is_err());
    }

    #[test]
    fn standardized_exponential_system_round_trip() {
        // Colpitts-shaped system against a standardized state.
        let lib = LibraryConfig::polynomial(3, 2, true).with_exp(0).build().unwrap();
        let p = lib.len();
        let mut truth = CoefficientState::zeros(3, p, vec![-1.0], false);
        let z = lib.position(&Term::monomial(vec![0, 0, 1])).unwrap();
        let x = lib.position(&Term::monomial(vec![1, 0, 0])).unwrap();
        let y = lib.position(&Term::monomial(vec![0, 1, 0])).unwrap();
        let one = lib.position(&Term::monomial(vec![0, 0, 0])).unwrap();
        let e = p - 1;
        truth.set(0, z, 5.0);
        truth.set(1, one, 6.2723);
        truth.set(1, e, -6.2723);
        truth.set(1, z, 6.2723);
        truth.set(2, x, -0.0797);
        truth.set(2, y, -0.0797);
        truth.set(2, z, -0.6898);
        let scaling = StateScaling { scales: vec![2.3, 0.41, 0.17] };
        let lib = lib.with_scales((0..p).map(|k| 1.0 + k as f64 * 0.37).collect()).unwrap();
        let fwd = scale_coefficients(&truth, &lib, Some(&scaling)).unwrap();
        assert_relative_eq!(fwd.inner[0], -2.3, epsilon = 1e-14);
        let back = rescale_coefficients(&fwd, &lib, Some(&scaling)).unwrap();
        for (a, b) in back.theta().iter().zip(truth.theta()) {
            assert!((a - b).abs() <= 1e-10);
        }
        assert!((back.inner[0] + 1.0).abs() <= 1e-10);

        // The standardized model evaluated at x̄ reproduces the original rhs.
        let xs = [0.7, -0.2, 0.05];
        let xbar: Vec<f64> = xs.iter().zip(&scaling.scales).map(|(v, s)| v / s).collect();
        let orig = truth.rhs(&lib.unscaled(), &xs).unwrap();
        let stdz = fwd.rhs(&lib, &xbar).unwrap();
        for c in 0..3 {
            assert_relative_eq!(stdz[c] * scaling.scales[c], orig[c], epsilon = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn scale_then_rescale_is_identity(
            theta in proptest::collection::vec(-10.0f64..10.0, 20),
            s in proptest::collection::vec(0.01f64..100.0, 10),
            std in proptest::collection::vec(0.1f64..10.0, 2),
        ) {
            let lib = CandidateLibrary::polynomial(2, 3, false).unwrap().with_exp(1).unwrap().with_scales(s).unwrap();
            let st = CoefficientState::from_parts(2, 10, theta, vec![true; 20], vec![0.3], true).unwrap();
            let scaling = StateScaling { scales: std };
            let back = scale_coefficients(&rescale_coefficients(&st, &lib, Some(&scaling)).unwrap(), &lib, Some(&scaling)).unwrap();
            for (a, b) in back.theta().iter().zip(st.theta()) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
            prop_assert!((back.inner[0] - 0.3).abs() < 1e-14);
        }
    }
}
