//! The discrete hybrid loss as a function of one packed variable vector.
//!
//! Variables are ordered states first (time-major, `i*d + c`), then the
//! active linear coefficients in row-major `(equation, term)` order, then the
//! inner parameters whose host term is active somewhere. Inactive
//! coefficients are fixed at zero and inactive inner parameters at their
//! supplied values.
//!
//! [`HybridObjective::linearize`] evaluates, per interval and equation, the
//! residual, its Jacobian and the nonzero pieces of its Hessian. Everything
//! else (gradient, exact Hessian-vector products, the dense parameter
//! blocks) is a contraction of that linearization.

use crate::curvature::{assemble_hessian, Coloring, CurvatureSource, SparsityPattern};
use crate::discrete::{LossParts, LossWeights, Observations, StateGrid};
use crate::error::{invalid, Error, Result};
use crate::library::{CandidateLibrary, CoefficientState};
use crate::linalg::SymmetricMatrix;
use crate::lm::Objective;

/// Mapping between the packed variable vector and states / coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct VariableLayout {
    n: usize,
    d: usize,
    p: usize,
    theta_vars: Vec<(usize, usize)>,
    theta_index: Vec<Option<usize>>,
    inner_vars: Vec<usize>,
    inner_index: Vec<Option<usize>>,
}

impl VariableLayout {
    pub fn new(n: usize, lib: &CandidateLibrary, mask: &[bool]) -> Result<Self> {
        let d = lib.state_dim();
        let p = lib.len();
        if mask.len() != d * p {
            return Err(Error::Dimension {
                what: "mask",
                expected: d * p,
                got: mask.len(),
            });
        }
        let ns = n * d;
        let mut theta_vars = Vec::new();
        let mut theta_index = vec![None; d * p];
        for c in 0..d {
            for k in 0..p {
                if mask[c * p + k] {
                    theta_index[c * p + k] = Some(ns + theta_vars.len());
                    theta_vars.push((c, k));
                }
            }
        }
        let mut inner_vars: Vec<usize> = lib
            .terms()
            .iter()
            .enumerate()
            .filter_map(|(k, t)| {
                let slot = t.inner_slot()?;
                (0..d).any(|c| mask[c * p + k]).then_some(slot)
            })
            .collect();
        inner_vars.sort_unstable();
        inner_vars.dedup();
        let mut inner_index = vec![None; lib.num_inner()];
        let base = ns + theta_vars.len();
        for (j, &slot) in inner_vars.iter().enumerate() {
            inner_index[slot] = Some(base + j);
        }
        Ok(VariableLayout {
            n,
            d,
            p,
            theta_vars,
            theta_index,
            inner_vars,
            inner_index,
        })
    }

    pub fn grid_len(&self) -> usize {
        self.n
    }

    pub fn num_states(&self) -> usize {
        self.n * self.d
    }

    pub fn num_theta(&self) -> usize {
        self.theta_vars.len()
    }

    pub fn num_inner(&self) -> usize {
        self.inner_vars.len()
    }

    pub fn num_params(&self) -> usize {
        self.theta_vars.len() + self.inner_vars.len()
    }

    pub fn len(&self) -> usize {
        self.num_states() + self.num_params()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state_var(&self, i: usize, c: usize) -> usize {
        i * self.d + c
    }

    pub fn theta_var(&self, c: usize, k: usize) -> Option<usize> {
        self.theta_index[c * self.p + k]
    }

    pub fn inner_var(&self, slot: usize) -> Option<usize> {
        self.inner_index.get(slot).copied().flatten()
    }

    /// `(equation, term)` of each coefficient variable, in order.
    pub fn theta_vars(&self) -> &[(usize, usize)] {
        &self.theta_vars
    }

    /// Inner slot of each inner-parameter variable, in order.
    pub fn inner_vars(&self) -> &[usize] {
        &self.inner_vars
    }
}

/// Parameters that enter one equation: its active coefficients, then the
/// inner slots used by its active terms.
#[derive(Clone, Debug)]
struct EqParams {
    /// `(term, variable)`
    thetas: Vec<(usize, usize)>,
    /// `(slot, variable)`
    inners: Vec<(usize, usize)>,
    /// for each theta, local position of its inner slot among the params
    theta_inner: Vec<Option<usize>>,
    /// variable of every local parameter, thetas first
    vars: Vec<usize>,
}

impl EqParams {
    fn len(&self) -> usize {
        self.thetas.len() + self.inners.len()
    }

    fn var(&self, q: usize) -> usize {
        self.vars[q]
    }
}

/// Offsets of one equation's block inside an interval's linearization record.
#[derive(Clone, Copy, Debug)]
struct EqOffsets {
    g: usize,
    h: usize,
    jp: usize,
    hsp: usize,
    hpp: Option<usize>,
}

/// The normalized hybrid loss for a fixed mask, grid and training data.
#[derive(Clone, Debug)]
pub struct HybridObjective {
    lib: CandidateLibrary,
    layout: VariableLayout,
    weights: LossWeights,
    times: Vec<f64>,
    /// `(state variable, observed value)`
    data: Vec<(usize, f64)>,
    mask: Vec<bool>,
    inner_base: Vec<f64>,
    eqs: Vec<EqParams>,
    offsets: Vec<EqOffsets>,
    stride: usize,
    pattern: SparsityPattern,
    coloring: Coloring,
    template: Option<SymmetricMatrix>,
    hvp_count: usize,
}

impl HybridObjective {
    /// Builds the objective. `obs` supplies the training entries (its
    /// availability mask) and must align with `grid.data_index()`. `inner`
    /// holds the value of every inner slot; slots that become variables take
    /// their starting value from the packed vector instead.
    pub fn new(lib: &CandidateLibrary, grid: &StateGrid, obs: &Observations, mask: &[bool], inner: &[f64], weights: LossWeights) -> Result<Self> {
        weights.validate()?;
        let d = lib.state_dim();
        if grid.dim() != d || obs.dim() != d {
            return Err(Error::Dimension {
                what: "state dimension",
                expected: d,
                got: grid.dim(),
            });
        }
        if obs.len() != grid.data_index().len() {
            return Err(Error::Dimension {
                what: "observation samples",
                expected: grid.data_index().len(),
                got: obs.len(),
            });
        }
        if inner.len() != lib.num_inner() {
            return Err(Error::Dimension {
                what: "inner parameters",
                expected: lib.num_inner(),
                got: inner.len(),
            });
        }
        let n = grid.len();
        if n < 2 {
            return Err(invalid("grid needs at least two points"));
        }
        let layout = VariableLayout::new(n, lib, mask)?;
        let p = lib.len();
        let mut data = Vec::new();
        for (j, &row) in grid.data_index().iter().enumerate() {
            for c in 0..d {
                if let Some(v) = obs.value(j, c) {
                    data.push((layout.state_var(row, c), v));
                }
            }
        }

        let mut eqs = Vec::with_capacity(d);
        for c in 0..d {
            let thetas: Vec<(usize, usize)> = (0..p).filter_map(|k| layout.theta_var(c, k).map(|v| (k, v))).collect();
            let mut slots: Vec<usize> = thetas.iter().filter_map(|&(k, _)| lib.terms()[k].inner_slot()).collect();
            slots.sort_unstable();
            slots.dedup();
            let inners: Vec<(usize, usize)> = slots
                .iter()
                .map(|&s| (s, layout.inner_var(s).expect("active host term")))
                .collect();
            let theta_inner = thetas
                .iter()
                .map(|&(k, _)| {
                    lib.terms()[k]
                        .inner_slot()
                        .map(|s| thetas.len() + slots.binary_search(&s).expect("collected above"))
                })
                .collect();
            let vars = thetas.iter().chain(&inners).map(|&(_, v)| v).collect();
            eqs.push(EqParams {
                thetas,
                inners,
                theta_inner,
                vars,
            });
        }
        let mut offsets = Vec::with_capacity(d);
        let mut off = d; // residuals first
        for eq in &eqs {
            let nq = eq.len();
            let g = off;
            let h = g + d;
            let jp = h + d * d;
            let hsp = jp + nq;
            let mut end = hsp + d * nq;
            let hpp = if eq.inners.is_empty() {
                None
            } else {
                let at = end;
                end += nq * nq;
                Some(at)
            };
            offsets.push(EqOffsets { g, h, jp, hsp, hpp });
            off = end;
        }
        let pattern = SparsityPattern::derive(n, lib, mask)?;
        let coloring = crate::curvature::star_coloring(&pattern);
        Ok(HybridObjective {
            lib: lib.clone(),
            layout,
            weights,
            times: grid.times().to_vec(),
            data,
            mask: mask.to_vec(),
            inner_base: inner.to_vec(),
            eqs,
            offsets,
            stride: off,
            pattern,
            coloring,
            template: None,
            hvp_count: 0,
        })
    }

    pub fn layout(&self) -> &VariableLayout {
        &self.layout
    }

    pub fn weights(&self) -> &LossWeights {
        &self.weights
    }

    pub fn library(&self) -> &CandidateLibrary {
        &self.lib
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn pattern(&self) -> &SparsityPattern {
        &self.pattern
    }

    pub fn coloring(&self) -> &Coloring {
        &self.coloring
    }

    /// Number of available training entries `n̂`.
    pub fn num_data(&self) -> usize {
        self.data.len()
    }

    pub fn dim(&self) -> usize {
        self.layout.len()
    }

    /// Packs grid values and coefficients into a variable vector.
    pub fn pack(&self, states: &[f64], coeffs: &CoefficientState) -> Result<Vec<f64>> {
        let ns = self.layout.num_states();
        if states.len() != ns {
            return Err(Error::Dimension {
                what: "grid state values",
                expected: ns,
                got: states.len(),
            });
        }
        if coeffs.dim() != self.layout.d || coeffs.num_terms() != self.layout.p || coeffs.inner.len() != self.inner_base.len() {
            return Err(invalid("coefficient state does not match the objective"));
        }
        let mut x = Vec::with_capacity(self.layout.len());
        x.extend_from_slice(states);
        x.extend(self.layout.theta_vars.iter().map(|&(c, k)| coeffs.get(c, k)));
        x.extend(self.layout.inner_vars.iter().map(|&s| coeffs.inner[s]));
        Ok(x)
    }

    /// Splits a variable vector back into grid values and a masked
    /// coefficient state (flagged as scaled).
    pub fn unpack(&self, x: &[f64]) -> (Vec<f64>, CoefficientState) {
        let ns = self.layout.num_states();
        let (d, p) = (self.layout.d, self.layout.p);
        let mut theta = vec![0.0; d * p];
        for (j, &(c, k)) in self.layout.theta_vars.iter().enumerate() {
            theta[c * p + k] = x[ns + j];
        }
        let inner = self.inner_values(x);
        let coeffs = CoefficientState::from_parts(d, p, theta, self.mask.clone(), inner, true).expect("layout dimensions");
        (x[..ns].to_vec(), coeffs)
    }

    fn inner_values(&self, x: &[f64]) -> Vec<f64> {
        let mut inner = self.inner_base.clone();
        for (j, &s) in self.layout.inner_vars.iter().enumerate() {
            inner[s] = x[self.layout.num_states() + self.layout.num_theta() + j];
        }
        inner
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.layout.len() {
            return Err(Error::Dimension {
                what: "variable vector",
                expected: self.layout.len(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn penalty_scale(&self) -> f64 {
        let k = self.layout.num_theta();
        if k == 0 || self.weights.r == 0.0 {
            0.0
        } else {
            self.weights.r / k as f64
        }
    }

    fn data_scale(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.weights.lambda / self.data.len() as f64
        }
    }

    /// Raw model and data sums `Σ‖r‖²`, `Σ(û - u)²`.
    fn raw_sums(&self, x: &[f64]) -> (f64, f64) {
        let (n, d) = (self.layout.n, self.layout.d);
        let ns = self.layout.num_states();
        let inner = self.inner_values(x);
        let mut ws = self.lib.workspace();
        let mut mid = vec![0.0; d];
        let mut model = 0.0;
        for i in 0..n - 1 {
            let dt = self.times[i + 1] - self.times[i];
            let (a, b) = (&x[i * d..(i + 1) * d], &x[(i + 1) * d..(i + 2) * d]);
            for c in 0..d {
                mid[c] = 0.5 * (a[c] + b[c]);
            }
            self.lib.eval_values_into(&mid, &inner, &mut ws);
            for (c, eq) in self.eqs.iter().enumerate() {
                let f: f64 = eq.thetas.iter().map(|&(k, v)| x[v] * ws.values[k]).sum();
                let r = (b[c] - a[c]) / dt - f;
                model += r * r;
            }
        }
        let data: f64 = self
            .data
            .iter()
            .map(|&(v, obs)| {
                let e = obs - x[v];
                e * e
            })
            .sum();
        debug_assert!(ns <= x.len());
        (model, data)
    }

    /// Loss value and its three parts. Non-finite inputs give non-finite
    /// output rather than an error.
    pub fn parts(&self, x: &[f64]) -> Result<LossParts> {
        self.check_len(x)?;
        let (model, data) = self.raw_sums(x);
        let model = model / self.layout.n as f64;
        let data = self.data_scale() * data;
        let two_eps2 = 2.0 * self.weights.epsilon * self.weights.epsilon;
        let ns = self.layout.num_states();
        let penalty = self.penalty_scale()
            * x[ns..ns + self.layout.num_theta()]
                .iter()
                .map(|t| 1.0 - (-t * t / two_eps2).exp())
                .sum::<f64>();
        Ok(LossParts {
            total: model + data + penalty,
            model,
            data,
            penalty,
        })
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.parts(x)?.total)
    }

    /// Undivided fit `Σ‖r‖² + λΣ(û - u)²` over the training entries.
    pub fn unnormalized_fit(&self, x: &[f64]) -> Result<f64> {
        self.check_len(x)?;
        let (model, data) = self.raw_sums(x);
        Ok(model + self.weights.lambda * data)
    }

    /// Residuals and first/second derivative pieces at `x`.
    pub fn linearize(&self, x: &[f64]) -> Result<Linearization<'_>> {
        self.check_len(x)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("variable vector"));
        }
        let (n, d) = (self.layout.n, self.layout.d);
        let inner = self.inner_values(x);
        let mut ws = self.lib.workspace();
        let mut mid = vec![0.0; d];
        let mut rec = vec![0.0; (n - 1) * self.stride];
        for i in 0..n - 1 {
            let dt = self.times[i + 1] - self.times[i];
            let (a, b) = (&x[i * d..(i + 1) * d], &x[(i + 1) * d..(i + 2) * d]);
            for c in 0..d {
                mid[c] = 0.5 * (a[c] + b[c]);
            }
            self.lib.eval_into(&mid, &inner, &mut ws);
            let block = &mut rec[i * self.stride..(i + 1) * self.stride];
            for (c, eq) in self.eqs.iter().enumerate() {
                let o = self.offsets[c];
                let nt = eq.thetas.len();
                let nq = eq.len();
                let mut f = 0.0;
                for (q, &(k, v)) in eq.thetas.iter().enumerate() {
                    let th = x[v];
                    f += th * ws.values[k];
                    let gk = ws.grad(k);
                    let hk = ws.hess(k);
                    for bb in 0..d {
                        block[o.g + bb] += th * gk[bb];
                        block[o.hsp + bb * nq + q] = -0.5 * gk[bb];
                    }
                    for e in 0..d * d {
                        block[o.h + e] += th * hk[e];
                    }
                    block[o.jp + q] = -ws.values[k];
                    if let Some(ql) = eq.theta_inner[q] {
                        block[o.jp + ql] -= th * ws.d_inner[k];
                        let ix = ws.inner_dx(k);
                        for bb in 0..d {
                            block[o.hsp + bb * nq + ql] -= 0.5 * th * ix[bb];
                        }
                        let hpp = o.hpp.expect("equation has inner parameters");
                        block[hpp + q * nq + ql] = -ws.d_inner[k];
                        block[hpp + ql * nq + q] = -ws.d_inner[k];
                        block[hpp + ql * nq + ql] -= th * ws.d2_inner[k];
                    }
                }
                debug_assert!(nt <= nq);
                block[c] = (b[c] - a[c]) / dt - f;
            }
        }
        if rec.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("residual linearization"));
        }
        Ok(Linearization { obj: self, x: x.to_vec(), rec })
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.linearize(x)?.gradient())
    }

    /// Exact Hessian-vector product at `x`.
    pub fn hvp(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.linearize(x)?.hvp(v)
    }

    /// Sparse Hessian at `x`, assembled from colored products.
    pub fn hessian(&self, x: &[f64]) -> Result<SymmetricMatrix> {
        let lin = self.linearize(x)?;
        Ok(assemble_hessian(&lin, &self.pattern, &self.coloring, None)?.0)
    }

    /// Hessian-vector products spent on assembly so far.
    pub fn hvp_count(&self) -> usize {
        self.hvp_count
    }
}

impl Objective for HybridObjective {
    fn value(&self, x: &[f64]) -> f64 {
        self.parts(x).map_or(f64::NAN, |p| p.total)
    }

    fn derivatives(&mut self, x: &[f64]) -> Result<(Vec<f64>, SymmetricMatrix)> {
        let template = self.template.take();
        let lin = self.linearize(x)?;
        let g = lin.gradient();
        let (h, stats) = assemble_hessian(&lin, &self.pattern, &self.coloring, template)?;
        drop(lin);
        self.hvp_count += stats.hvp_count;
        self.template = Some(h.clone());
        Ok((g, h))
    }
}

/// Residuals and their derivatives at one point.
pub struct Linearization<'a> {
    obj: &'a HybridObjective,
    x: Vec<f64>,
    rec: Vec<f64>,
}

impl Linearization<'_> {
    pub fn point(&self) -> &[f64] {
        &self.x
    }

    fn block(&self, i: usize) -> &[f64] {
        &self.rec[i * self.obj.stride..(i + 1) * self.obj.stride]
    }

    /// Jacobian of `r_c` with respect to state `(side, b)`.
    #[inline]
    fn jac_state(&self, blk: &[f64], c: usize, b: usize, side: usize, dt: f64) -> f64 {
        let delta = if b == c { 1.0 / dt } else { 0.0 };
        let g = blk[self.obj.offsets[c].g + b];
        if side == 0 {
            -delta - 0.5 * g
        } else {
            delta - 0.5 * g
        }
    }

    pub fn gradient(&self) -> Vec<f64> {
        let obj = self.obj;
        let (n, d) = (obj.layout.n, obj.layout.d);
        let two_n = 2.0 / n as f64;
        let mut g = vec![0.0; obj.layout.len()];
        for i in 0..n - 1 {
            let dt = obj.times[i + 1] - obj.times[i];
            let blk = self.block(i);
            for (c, eq) in obj.eqs.iter().enumerate() {
                let w = two_n * blk[c];
                if w == 0.0 {
                    continue;
                }
                for side in 0..2 {
                    for b in 0..d {
                        g[(i + side) * d + b] += w * self.jac_state(blk, c, b, side, dt);
                    }
                }
                let o = obj.offsets[c];
                for q in 0..eq.len() {
                    g[eq.var(q)] += w * blk[o.jp + q];
                }
            }
        }
        let ds = 2.0 * obj.data_scale();
        for &(v, obs) in &obj.data {
            g[v] -= ds * (obs - self.x[v]);
        }
        let ps = obj.penalty_scale();
        if ps > 0.0 {
            let eps2 = obj.weights.epsilon * obj.weights.epsilon;
            let ns = obj.layout.num_states();
            for j in ns..ns + obj.layout.num_theta() {
                let t = self.x[j];
                g[j] += ps * t / eps2 * (-t * t / (2.0 * eps2)).exp();
            }
        }
        g
    }

    fn penalty_curvature(&self, t: f64) -> f64 {
        let eps2 = self.obj.weights.epsilon * self.obj.weights.epsilon;
        self.obj.penalty_scale() * (1.0 / eps2 - t * t / (eps2 * eps2)) * (-t * t / (2.0 * eps2)).exp()
    }

    /// Exact Hessian-vector product.
    pub fn hvp(&self, v: &[f64]) -> Result<Vec<f64>> {
        let obj = self.obj;
        if v.len() != obj.layout.len() {
            return Err(Error::Dimension {
                what: "direction vector",
                expected: obj.layout.len(),
                got: v.len(),
            });
        }
        self.hvp_impl(v, true)
    }

    /// `H·v` where `v` covers the states only; returns the state rows.
    pub fn state_hvp(&self, v: &[f64]) -> Result<Vec<f64>> {
        let ns = self.obj.layout.num_states();
        if v.len() != ns {
            return Err(Error::Dimension {
                what: "state direction",
                expected: ns,
                got: v.len(),
            });
        }
        self.hvp_impl(v, false)
    }

    fn hvp_impl(&self, v: &[f64], with_params: bool) -> Result<Vec<f64>> {
        let obj = self.obj;
        let (n, d) = (obj.layout.n, obj.layout.d);
        let two_n = 2.0 / n as f64;
        let mut out = vec![0.0; v.len()];
        let mut vm = vec![0.0; d];
        let mut side_term = vec![0.0; d];
        let mut vq = Vec::new();
        for i in 0..n - 1 {
            let dt = obj.times[i + 1] - obj.times[i];
            let blk = self.block(i);
            let (va, vb) = (&v[i * d..(i + 1) * d], &v[(i + 1) * d..(i + 2) * d]);
            for b in 0..d {
                vm[b] = va[b] + vb[b];
            }
            for (c, eq) in obj.eqs.iter().enumerate() {
                let o = obj.offsets[c];
                let nq = eq.len();
                let g = &blk[o.g..o.g + d];
                let h = &blk[o.h..o.h + d * d];
                // J·v
                let mut jv = (vb[c] - va[c]) / dt;
                for b in 0..d {
                    jv -= 0.5 * g[b] * vm[b];
                }
                if with_params {
                    vq.clear();
                    vq.extend((0..nq).map(|q| v[eq.var(q)]));
                    for q in 0..nq {
                        jv += blk[o.jp + q] * vq[q];
                    }
                }
                let r = blk[c];
                // state rows of (∇²r) v, identical on both sides
                for b in 0..d {
                    let mut s = 0.0;
                    for bb in 0..d {
                        s -= 0.25 * h[b * d + bb] * vm[bb];
                    }
                    if with_params {
                        for q in 0..nq {
                            s += blk[o.hsp + b * nq + q] * vq[q];
                        }
                    }
                    side_term[b] = r * s;
                }
                for side in 0..2 {
                    for b in 0..d {
                        let z = (i + side) * d + b;
                        out[z] += two_n * (self.jac_state(blk, c, b, side, dt) * jv + side_term[b]);
                    }
                }
                if !with_params {
                    continue;
                }
                for q in 0..nq {
                    let mut s = 0.0;
                    for b in 0..d {
                        s += blk[o.hsp + b * nq + q] * vm[b];
                    }
                    if let Some(hp) = o.hpp {
                        for qq in 0..nq {
                            s += blk[hp + q * nq + qq] * vq[qq];
                        }
                    }
                    out[eq.var(q)] += two_n * (blk[o.jp + q] * jv + r * s);
                }
            }
        }
        let ds = 2.0 * obj.data_scale();
        for &(z, _) in &obj.data {
            out[z] += ds * v[z];
        }
        if with_params && obj.penalty_scale() > 0.0 {
            let ns = obj.layout.num_states();
            for j in ns..ns + obj.layout.num_theta() {
                out[j] += self.penalty_curvature(self.x[j]) * v[j];
            }
        }
        if out.iter().any(|o| !o.is_finite()) {
            return Err(Error::NonFinite("Hessian-vector product"));
        }
        Ok(out)
    }

    /// Dense state–parameter strip (`ns × np`, row-major) and
    /// parameter–parameter block (`np × np`), computed directly.
    pub fn parameter_blocks(&self) -> (Vec<f64>, Vec<f64>) {
        let obj = self.obj;
        let (n, d) = (obj.layout.n, obj.layout.d);
        let ns = obj.layout.num_states();
        let np = obj.layout.num_params();
        let two_n = 2.0 / n as f64;
        let mut cross = vec![0.0; ns * np];
        // per-equation parameter blocks in local numbering
        let mut local: Vec<Vec<f64>> = obj.eqs.iter().map(|eq| vec![0.0; eq.len() * eq.len()]).collect();
        let mut coef = vec![0.0; d];
        for i in 0..n - 1 {
            let dt = obj.times[i + 1] - obj.times[i];
            let blk = self.block(i);
            for (c, eq) in obj.eqs.iter().enumerate() {
                let o = obj.offsets[c];
                let nq = eq.len();
                let r = blk[c];
                let jp = &blk[o.jp..o.jp + nq];
                for side in 0..2 {
                    for (b, cb) in coef.iter_mut().enumerate() {
                        *cb = self.jac_state(blk, c, b, side, dt);
                    }
                    for b in 0..d {
                        let z = (i + side) * d + b;
                        let row = &mut cross[z * np..(z + 1) * np];
                        let hsp = &blk[o.hsp + b * nq..o.hsp + (b + 1) * nq];
                        let jz = two_n * coef[b];
                        let rr = two_n * r;
                        for q in 0..nq {
                            row[eq.vars[q] - ns] += jz * jp[q] + rr * hsp[q];
                        }
                    }
                }
                let blk_p = &mut local[c];
                for q in 0..nq {
                    let f = two_n * jp[q];
                    let dst = &mut blk_p[q * nq..(q + 1) * nq];
                    for (x, &jq) in dst.iter_mut().zip(jp) {
                        *x += f * jq;
                    }
                }
                if let Some(hp) = o.hpp {
                    let rr = two_n * r;
                    for (x, &h) in blk_p.iter_mut().zip(&blk[hp..hp + nq * nq]) {
                        *x += rr * h;
                    }
                }
            }
        }
        let mut params = vec![0.0; np * np];
        for (eq, blk_p) in obj.eqs.iter().zip(&local) {
            let nq = eq.len();
            for q in 0..nq {
                let pq = eq.vars[q] - ns;
                for qq in 0..nq {
                    params[pq * np + eq.vars[qq] - ns] += blk_p[q * nq + qq];
                }
            }
        }
        if obj.penalty_scale() > 0.0 {
            for j in 0..obj.layout.num_theta() {
                params[j * np + j] += self.penalty_curvature(self.x[ns + j]);
            }
        }
        (cross, params)
    }
}

impl CurvatureSource for Linearization<'_> {
    fn num_states(&self) -> usize {
        self.obj.layout.num_states()
    }

    fn num_params(&self) -> usize {
        self.obj.layout.num_params()
    }

    fn hvp(&self, v: &[f64]) -> Result<Vec<f64>> {
        Linearization::hvp(self, v)
    }

    fn state_hvp(&self, v: &[f64]) -> Result<Vec<f64>> {
        Linearization::state_hvp(self, v)
    }

    fn parameter_blocks(&self) -> (Vec<f64>, Vec<f64>) {
        Linearization::parameter_blocks(self)
    }
}
