//! Candidate term libraries.
//!
//! A [`CandidateLibrary`] is an ordered list of [`Term`]s shared by every
//! equation of a `d`-dimensional system, together with per-term
//! normalization scales `s_k`. Evaluation always returns scaled values
//! `N_k(x) / s_k`; the scales start at 1 and are set from data by
//! [`CandidateLibrary::normalized`].
//!
//! Polynomial libraries list monomials in graded lexicographic order:
//! the constant (when requested), then degree 1, degree 2, and so on, with
//! descending exponent vectors inside each degree.
//!
//! ```
//! use odeid::library::CandidateLibrary;
//!
//! let lib = CandidateLibrary::polynomial(2, 2, false).unwrap();
//! let names: Vec<String> = lib.terms().iter().map(|t| t.to_string()).collect();
//! assert_eq!(names, ["x1", "x2", "x1^2", "x1*x2", "x2^2"]);
//! ```

mod coefficients;
mod term;

pub use coefficients::{rescale_coefficients, scale_coefficients, CoefficientState, StateScaling};
pub use term::Term;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
pub(crate) use term::{eval_raw, RawDerivs};

/// Norms below this are treated as a degenerate (identically zero) column.
pub const DEGENERATE_NORM: f64 = 1e-12;

/// Extra nonlinear term requested in a [`LibraryConfig`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonlinearTermSpec {
    pub kind: NonlinearKind,
    pub var: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NonlinearKind {
    Exp,
}

/// Serializable library description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LibraryConfig {
    pub state_dim: usize,
    pub max_degree: u32,
    pub include_constant: bool,
    #[serde(default)]
    pub nonlinear: Vec<NonlinearTermSpec>,
}

impl LibraryConfig {
    pub fn polynomial(state_dim: usize, max_degree: u32, include_constant: bool) -> Self {
        LibraryConfig {
            state_dim,
            max_degree,
            include_constant,
            nonlinear: Vec::new(),
        }
    }

    pub fn with_exp(mut self, var: usize) -> Self {
        self.nonlinear.push(NonlinearTermSpec {
            kind: NonlinearKind::Exp,
            var,
        });
        self
    }

    pub fn build(&self) -> Result<CandidateLibrary> {
        CandidateLibrary::from_config(self)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateLibrary {
    state_dim: usize,
    terms: Vec<Term>,
    include_constant: bool,
    scales: Vec<f64>,
    /// Terms whose data norm was degenerate during normalization.
    degenerate: Vec<bool>,
    num_inner: usize,
    max_exponent: u32,
}

impl CandidateLibrary {
    /// All monomials of total degree `1..=max_degree`, plus the constant
    /// when `include_constant` is set.
    pub fn polynomial(state_dim: usize, max_degree: u32, include_constant: bool) -> Result<Self> {
        if state_dim == 0 {
            return Err(invalid("state_dim must be at least 1"));
        }
        if max_degree < 1 {
            return Err(invalid("max_degree must be at least 1"));
        }
        let mut terms = Vec::new();
        if include_constant {
            terms.push(Term::monomial(vec![0; state_dim]));
        }
        for degree in 1..=max_degree {
            terms.extend(term::exponents_of_degree(state_dim, degree).into_iter().map(Term::monomial));
        }
        Self::from_terms(state_dim, terms, include_constant)
    }

    pub fn from_config(cfg: &LibraryConfig) -> Result<Self> {
        let mut lib = Self::polynomial(cfg.state_dim, cfg.max_degree, cfg.include_constant)?;
        for spec in &cfg.nonlinear {
            match spec.kind {
                NonlinearKind::Exp => lib = lib.with_exp(spec.var)?,
            }
        }
        Ok(lib)
    }

    /// Builds a library from an explicit term list.
    pub fn from_terms(state_dim: usize, terms: Vec<Term>, include_constant: bool) -> Result<Self> {
        let mut num_inner = 0;
        let mut max_exponent = 0;
        for (k, t) in terms.iter().enumerate() {
            match t {
                Term::Monomial { exponents } => {
                    if exponents.len() != state_dim {
                        return Err(Error::Dimension {
                            what: "monomial exponent vector",
                            expected: state_dim,
                            got: exponents.len(),
                        });
                    }
                    max_exponent = max_exponent.max(exponents.iter().copied().max().unwrap_or(0));
                    if terms[..k].contains(t) {
                        return Err(invalid(format!("duplicate term {t}")));
                    }
                }
                Term::ParametricExp { var, inner } => {
                    if *var >= state_dim {
                        return Err(invalid(format!("exp term references x{} in a {state_dim}-dimensional system", var + 1)));
                    }
                    num_inner = num_inner.max(inner + 1);
                }
            }
        }
        let p = terms.len();
        Ok(CandidateLibrary {
            state_dim,
            terms,
            include_constant,
            scales: vec![1.0; p],
            degenerate: vec![false; p],
            num_inner,
            max_exponent,
        })
    }

    /// Appends `exp(a · x_var)` with a fresh inner parameter slot.
    pub fn with_exp(mut self, var: usize) -> Result<Self> {
        if var >= self.state_dim {
            return Err(invalid(format!("exp term references x{} in a {}-dimensional system", var + 1, self.state_dim)));
        }
        let slot = self.num_inner;
        self.terms.push(Term::ParametricExp { var, inner: slot });
        self.scales.push(1.0);
        self.degenerate.push(false);
        self.num_inner += 1;
        Ok(self)
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total number of linear coefficients across all equations.
    pub fn num_coefficients(&self) -> usize {
        self.state_dim * self.terms.len()
    }

    pub fn num_inner(&self) -> usize {
        self.num_inner
    }

    pub fn include_constant(&self) -> bool {
        self.include_constant
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn degenerate(&self) -> &[bool] {
        &self.degenerate
    }

    /// Returns a copy with the scales reset to 1.
    pub fn unscaled(&self) -> Self {
        let mut lib = self.clone();
        lib.scales.iter_mut().for_each(|s| *s = 1.0);
        lib.degenerate.iter_mut().for_each(|d| *d = false);
        lib
    }

    /// Index of a term, if present.
    pub fn position(&self, term: &Term) -> Option<usize> {
        self.terms.iter().position(|t| t == term)
    }

    fn check_point(&self, x: &[f64], inner: &[f64]) -> Result<()> {
        if x.len() != self.state_dim {
            return Err(Error::Dimension {
                what: "state point",
                expected: self.state_dim,
                got: x.len(),
            });
        }
        if inner.len() != self.num_inner {
            return Err(Error::Dimension {
                what: "inner parameter vector",
                expected: self.num_inner,
                got: inner.len(),
            });
        }
        if x.iter().chain(inner).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("term evaluation input"));
        }
        Ok(())
    }

    /// Scaled term values `N_k(x) / s_k`.
    pub fn evaluate(&self, x: &[f64], inner: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x, inner)?;
        let mut ws = self.workspace();
        self.eval_into(x, inner, &mut ws);
        Ok(ws.values)
    }

    /// Scaled values together with exact first and second derivatives with
    /// respect to the state and to inner parameters.
    pub fn derivatives(&self, x: &[f64], inner: &[f64]) -> Result<TermDerivatives> {
        self.check_point(x, inner)?;
        let mut ws = self.workspace();
        self.eval_into(x, inner, &mut ws);
        Ok(ws)
    }

    pub(crate) fn workspace(&self) -> TermDerivatives {
        let (p, d) = (self.len(), self.state_dim);
        TermDerivatives {
            d,
            values: vec![0.0; p],
            jacobian: vec![0.0; p * d],
            hessian: vec![0.0; p * d * d],
            d_inner: vec![0.0; p],
            d2_inner: vec![0.0; p],
            d_inner_dx: vec![0.0; p * d],
            powers: vec![vec![1.0; self.max_exponent as usize + 1]; d],
        }
    }

    /// Unchecked evaluation into a reusable workspace.
    pub(crate) fn eval_into(&self, x: &[f64], inner: &[f64], ws: &mut TermDerivatives) {
        let d = self.state_dim;
        for (i, &xi) in x.iter().enumerate() {
            let row = &mut ws.powers[i];
            for e in 1..row.len() {
                row[e] = row[e - 1] * xi;
            }
        }
        for (k, t) in self.terms.iter().enumerate() {
            let (v, da, d2a) = eval_raw(
                t,
                x,
                inner,
                &ws.powers,
                RawDerivs {
                    grad: &mut ws.jacobian[k * d..(k + 1) * d],
                    hess: &mut ws.hessian[k * d * d..(k + 1) * d * d],
                    d_inner_dx: &mut ws.d_inner_dx[k * d..(k + 1) * d],
                },
            );
            let inv = 1.0 / self.scales[k];
            ws.values[k] = v * inv;
            ws.d_inner[k] = da * inv;
            ws.d2_inner[k] = d2a * inv;
            if inv != 1.0 {
                ws.jacobian[k * d..(k + 1) * d].iter_mut().for_each(|g| *g *= inv);
                ws.hessian[k * d * d..(k + 1) * d * d].iter_mut().for_each(|h| *h *= inv);
                ws.d_inner_dx[k * d..(k + 1) * d].iter_mut().for_each(|h| *h *= inv);
            }
        }
    }

    /// Unchecked scaled values only.
    pub(crate) fn eval_values_into(&self, x: &[f64], inner: &[f64], ws: &mut TermDerivatives) {
        for (i, &xi) in x.iter().enumerate() {
            let row = &mut ws.powers[i];
            for e in 1..row.len() {
                row[e] = row[e - 1] * xi;
            }
        }
        for (k, t) in self.terms.iter().enumerate() {
            let v = match t {
                Term::Monomial { exponents } => exponents
                    .iter()
                    .enumerate()
                    .map(|(i, &e)| ws.powers[i][e as usize])
                    .product(),
                Term::ParametricExp { var, inner: slot } => (inner[*slot] * x[*var]).exp(),
            };
            ws.values[k] = v / self.scales[k];
        }
    }

    /// Sets `s_k = ‖N_k evaluated over the rows of states‖₂`.
    ///
    /// `states` is row-major with `state_dim` columns. Terms with a norm below
    /// [`DEGENERATE_NORM`] keep `s_k = 1` and are flagged in
    /// [`CandidateLibrary::degenerate`].
    pub fn normalized(&self, states: &[f64], inner: &[f64]) -> Result<Self> {
        let d = self.state_dim;
        if states.len() % d != 0 {
            return Err(Error::Dimension {
                what: "state matrix length",
                expected: (states.len() / d + 1) * d,
                got: states.len(),
            });
        }
        let raw = self.unscaled();
        let mut sums = vec![0.0; self.len()];
        for row in states.chunks(d) {
            let vals = raw.evaluate(row, inner)?;
            for (s, v) in sums.iter_mut().zip(&vals) {
                *s += v * v;
            }
        }
        let mut out = raw;
        for (k, s) in sums.into_iter().enumerate() {
            let norm = s.sqrt();
            if norm.is_finite() && norm >= DEGENERATE_NORM {
                out.scales[k] = norm;
            } else {
                log::warn!("term {} has degenerate data norm {norm:e}; leaving it unscaled", out.terms[k]);
                out.degenerate[k] = true;
            }
        }
        Ok(out)
    }

    /// Replaces the scales directly.
    pub fn with_scales(mut self, scales: Vec<f64>) -> Result<Self> {
        if scales.len() != self.len() {
            return Err(Error::Dimension {
                what: "scale vector",
                expected: self.len(),
                got: scales.len(),
            });
        }
        if scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(invalid("scales must be positive and finite"));
        }
        self.scales = scales;
        Ok(self)
    }
}

/// Scaled term values and exact derivatives at one point.
///
/// Layouts are row-major: `jacobian[k*d + j] = ∂Ñ_k/∂x_j`,
/// `hessian[(k*d + i)*d + j] = ∂²Ñ_k/∂x_i∂x_j`. The inner-parameter arrays
/// hold the derivative with respect to the term's own inner parameter and
/// are zero for monomials.
#[derive(Clone, Debug)]
pub struct TermDerivatives {
    d: usize,
    pub values: Vec<f64>,
    pub jacobian: Vec<f64>,
    pub hessian: Vec<f64>,
    pub d_inner: Vec<f64>,
    pub d2_inner: Vec<f64>,
    pub d_inner_dx: Vec<f64>,
    powers: Vec<Vec<f64>>,
}

impl TermDerivatives {
    pub fn grad(&self, k: usize) -> &[f64] {
        &self.jacobian[k * self.d..(k + 1) * self.d]
    }

    pub fn hess(&self, k: usize) -> &[f64] {
        let dd = self.d * self.d;
        &self.hessian[k * dd..(k + 1) * dd]
    }

    pub fn inner_dx(&self, k: usize) -> &[f64] {
        &self.d_inner_dx[k * self.d..(k + 1) * self.d]
    }
}
