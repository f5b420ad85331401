use std::fmt;

use serde::{Deserialize, Serialize};

/// A single candidate right-hand-side term.
///
/// Monomials are `∏ x_i^{e_i}`; the zero exponent vector is the constant 1.
/// A parametric exponential is `exp(a · x_var)` where `a` is the library's
/// inner parameter in slot `inner`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    Monomial { exponents: Vec<u32> },
    ParametricExp { var: usize, inner: usize },
}

impl Term {
    pub fn monomial(exponents: Vec<u32>) -> Self {
        Term::Monomial { exponents }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Term::Monomial { exponents } if exponents.iter().all(|&e| e == 0))
    }

    /// Inner parameter slot read by this term, if any.
    pub fn inner_slot(&self) -> Option<usize> {
        match self {
            Term::ParametricExp { inner, .. } => Some(*inner),
            Term::Monomial { .. } => None,
        }
    }

    /// Total polynomial degree; parametric terms report 0.
    pub fn degree(&self) -> u32 {
        match self {
            Term::Monomial { exponents } => exponents.iter().sum(),
            Term::ParametricExp { .. } => 0,
        }
    }

    /// Human readable form using `x1..xd` and `a1..` for inner parameters.
    pub fn label(&self) -> String {
        self.to_string()
    }

    /// Same as [`Term::label`] but with numeric values substituted for inner
    /// parameters.
    pub fn label_with_inner(&self, inner: &[f64]) -> String {
        match self {
            Term::ParametricExp { var, inner: slot } => match inner.get(*slot) {
                Some(a) => format!("exp({a:.4}*x{})", var + 1),
                None => self.to_string(),
            },
            Term::Monomial { .. } => self.to_string(),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Monomial { exponents } => {
                if exponents.iter().all(|&e| e == 0) {
                    return write!(f, "1");
                }
                let mut first = true;
                for (i, &e) in exponents.iter().enumerate() {
                    if e == 0 {
                        continue;
                    }
                    if !first {
                        write!(f, "*")?;
                    }
                    first = false;
                    if e == 1 {
                        write!(f, "x{}", i + 1)?;
                    } else {
                        write!(f, "x{}^{}", i + 1, e)?;
                    }
                }
                Ok(())
            }
            Term::ParametricExp { var, inner } => write!(f, "exp(a{}*x{})", inner + 1, var + 1),
        }
    }
}

/// Unscaled value and derivatives of one term at a point.
///
/// `grad` has length `d`, `hess` is `d×d` row-major. The inner-parameter
/// fields are zero for terms without an inner parameter.
pub(crate) struct RawDerivs<'a> {
    pub grad: &'a mut [f64],
    pub hess: &'a mut [f64],
    pub d_inner_dx: &'a mut [f64],
}

/// Fills `out` with the unscaled derivatives and returns
/// `(value, d/da, d²/da²)`.
///
/// `powers[i][e]` must hold `x_i^e` for every exponent in use.
pub(crate) fn eval_raw(
    term: &Term,
    x: &[f64],
    inner: &[f64],
    powers: &[Vec<f64>],
    out: RawDerivs<'_>,
) -> (f64, f64, f64) {
    let d = x.len();
    out.grad.iter_mut().for_each(|g| *g = 0.0);
    out.hess.iter_mut().for_each(|h| *h = 0.0);
    out.d_inner_dx.iter_mut().for_each(|h| *h = 0.0);
    match term {
        Term::Monomial { exponents } => {
            let value: f64 = exponents
                .iter()
                .enumerate()
                .map(|(i, &e)| powers[i][e as usize])
                .product();
            for j in 0..d {
                let ej = exponents[j];
                if ej == 0 {
                    continue;
                }
                let rest_j: f64 = (0..d)
                    .filter(|&i| i != j)
                    .map(|i| powers[i][exponents[i] as usize])
                    .product();
                out.grad[j] = ej as f64 * powers[j][ej as usize - 1] * rest_j;
                if ej >= 2 {
                    out.hess[j * d + j] =
                        (ej * (ej - 1)) as f64 * powers[j][ej as usize - 2] * rest_j;
                }
                for l in (j + 1)..d {
                    let el = exponents[l];
                    if el == 0 {
                        continue;
                    }
                    let rest: f64 = (0..d)
                        .filter(|&i| i != j && i != l)
                        .map(|i| powers[i][exponents[i] as usize])
                        .product();
                    let v = (ej * el) as f64
                        * powers[j][ej as usize - 1]
                        * powers[l][el as usize - 1]
                        * rest;
                    out.hess[j * d + l] = v;
                    out.hess[l * d + j] = v;
                }
            }
            (value, 0.0, 0.0)
        }
        Term::ParametricExp { var, inner: slot } => {
            let a = inner[*slot];
            let xv = x[*var];
            let e = (a * xv).exp();
            out.grad[*var] = a * e;
            out.hess[*var * d + *var] = a * a * e;
            out.d_inner_dx[*var] = (1.0 + a * xv) * e;
            (e, xv * e, xv * xv * e)
        }
    }
}

/// Exponent vectors of total degree `degree` in `d` variables, in descending
/// lexicographic order (so `x1^2, x1*x2, x2^2` for `d = 2`).
pub(crate) fn exponents_of_degree(d: usize, degree: u32) -> Vec<Vec<u32>> {
    fn rec(pos: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        let d = cur.len();
        if pos == d - 1 {
            cur[pos] = left;
            out.push(cur.clone());
            cur[pos] = 0;
            return;
        }
        for e in (0..=left).rev() {
            cur[pos] = e;
            rec(pos + 1, left - e, cur, out);
        }
        cur[pos] = 0;
    }
    let mut out = Vec::new();
    let mut cur = vec![0; d];
    rec(0, degree, &mut cur, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_order_within_degree() {
        let e = exponents_of_degree(2, 2);
        assert_eq!(e, vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(exponents_of_degree(3, 1).len(), 3);
        assert_eq!(exponents_of_degree(3, 3).len(), 10);
    }

    #[test]
    fn labels() {
        assert_eq!(Term::monomial(vec![2, 1]).to_string(), "x1^2*x2");
        assert_eq!(Term::monomial(vec![0, 0]).to_string(), "1");
        assert_eq!(Term::ParametricExp { var: 0, inner: 0 }.to_string(), "exp(a1*x1)");
        assert_eq!(
            Term::ParametricExp { var: 0, inner: 0 }.label_with_inner(&[-1.0]),
            "exp(-1.0000*x1)"
        );
    }
}
