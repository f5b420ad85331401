//! Hessian sparsity, star coloring and Hessian assembly.
//!
//! The midpoint stencil couples the states of grid points `i` and `i+1`
//! only, so the state–state block is block-tridiagonal in time. That block
//! is recovered from a handful of Hessian-vector products whose seeds come
//! from a star coloring of the state graph. The state–parameter strip and
//! the parameter–parameter block are dense and small, and are supplied
//! directly by the objective.

use std::collections::HashMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::library::CandidateLibrary;
use crate::linalg::SymmetricMatrix;
use crate::objective::VariableLayout;

/// Which block of the Hessian an entry belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    StateState,
    StateParam,
    ParamParam,
}

/// Structural nonzeros of the Hessian.
///
/// States come first and are described by a neighbor graph. Every state is
/// assumed coupled to every parameter (the strip is dense); parameter
/// couplings are listed explicitly. Diagonal entries are always present.
#[derive(Clone, Debug, PartialEq)]
pub struct SparsityPattern {
    state_adj: Vec<Vec<usize>>,
    param_adj: Vec<Vec<usize>>,
}

fn symmetrize(adj: &mut [Vec<usize>]) {
    let n = adj.len();
    let mut extra: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (v, nb) in adj.iter().enumerate() {
        for &w in nb {
            extra[w].push(v);
        }
    }
    for (v, nb) in adj.iter_mut().enumerate() {
        nb.append(&mut extra[v]);
        nb.retain(|&w| w != v);
        nb.sort_unstable();
        nb.dedup();
    }
}

impl SparsityPattern {
    /// Pattern from arbitrary neighbor lists (symmetrized, self loops
    /// dropped).
    pub fn from_graphs(mut state_adj: Vec<Vec<usize>>, mut param_adj: Vec<Vec<usize>>) -> Result<Self> {
        for (adj, what) in [(&state_adj, "state"), (&param_adj, "parameter")] {
            let n = adj.len();
            if adj.iter().flatten().any(|&w| w >= n) {
                return Err(Error::InvalidArgument(format!("{what} neighbor index out of range")));
            }
        }
        symmetrize(&mut state_adj);
        symmetrize(&mut param_adj);
        Ok(SparsityPattern { state_adj, param_adj })
    }

    /// Pattern of the discrete hybrid loss on `n` grid points for the given
    /// mask, with variables ordered as in [`VariableLayout`].
    pub fn derive(n: usize, lib: &CandidateLibrary, mask: &[bool]) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument("pattern needs at least two grid points".into()));
        }
        let layout = VariableLayout::new(n, lib, mask)?;
        let d = lib.state_dim();
        let p = lib.len();
        let ns = n * d;
        let mut state_adj = Vec::with_capacity(ns);
        for i in 0..n {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            for c in 0..d {
                let me = i * d + c;
                state_adj.push((lo * d..(hi + 1) * d).filter(|&w| w != me).collect());
            }
        }
        // parameters that enter each equation, as parameter-local indices
        let mut per_eq: Vec<Vec<usize>> = vec![Vec::new(); d];
        for (j, &(c, _)) in layout.theta_vars().iter().enumerate() {
            per_eq[c].push(j);
        }
        let nt = layout.num_theta();
        for (c, list) in per_eq.iter_mut().enumerate() {
            for k in 0..p {
                if let (true, Some(slot)) = (mask[c * p + k], lib.terms()[k].inner_slot()) {
                    let v = layout.inner_var(slot).expect("active host term") - ns;
                    debug_assert!(v >= nt);
                    list.push(v);
                }
            }
            list.sort_unstable();
            list.dedup();
        }
        let mut param_adj = vec![Vec::new(); layout.num_params()];
        for list in &per_eq {
            for &a in list {
                param_adj[a].extend(list.iter().copied().filter(|&b| b != a));
            }
        }
        Self::from_graphs(state_adj, param_adj)
    }

    pub fn num_states(&self) -> usize {
        self.state_adj.len()
    }

    pub fn num_params(&self) -> usize {
        self.param_adj.len()
    }

    /// Total number of optimization variables.
    pub fn dimension(&self) -> usize {
        self.num_states() + self.num_params()
    }

    /// Neighbors of state `v` among the states.
    pub fn state_neighbors(&self, v: usize) -> &[usize] {
        &self.state_adj[v]
    }

    pub fn state_graph(&self) -> &[Vec<usize>] {
        &self.state_adj
    }

    pub fn block(&self, i: usize, j: usize) -> Block {
        let ns = self.num_states();
        match (i < ns, j < ns) {
            (true, true) => Block::StateState,
            (false, false) => Block::ParamParam,
            _ => Block::StateParam,
        }
    }

    /// Whether entry `(i, j)` is structurally nonzero.
    pub fn contains(&self, i: usize, j: usize) -> bool {
        if i == j {
            return i < self.dimension();
        }
        let ns = self.num_states();
        match self.block(i, j) {
            Block::StateState => self.state_adj[i].binary_search(&j).is_ok(),
            Block::StateParam => i.max(j) < self.dimension(),
            Block::ParamParam => self.param_adj[i - ns].binary_search(&(j - ns)).is_ok(),
        }
    }

    /// Empty matrix with this structure (upper triangle).
    pub fn structure(&self) -> SymmetricMatrix {
        let ns = self.num_states();
        let mut cols: Vec<Vec<usize>> = Vec::with_capacity(self.dimension());
        for (v, nb) in self.state_adj.iter().enumerate() {
            let mut rows: Vec<usize> = nb.iter().copied().filter(|&w| w < v).collect();
            rows.push(v);
            cols.push(rows);
        }
        for (q, nb) in self.param_adj.iter().enumerate() {
            let mut rows: Vec<usize> = (0..ns).collect();
            rows.extend(nb.iter().copied().filter(|&w| w < q).map(|w| w + ns));
            rows.push(ns + q);
            cols.push(rows);
        }
        SymmetricMatrix::from_columns(&cols).expect("rows sorted by construction")
    }

    /// Number of structurally nonzero entries in the upper triangle.
    pub fn nnz_upper(&self) -> usize {
        let ss: usize = self.state_adj.iter().map(Vec::len).sum::<usize>() / 2 + self.num_states();
        let pp: usize = self.param_adj.iter().map(Vec::len).sum::<usize>() / 2 + self.num_params();
        ss + pp + self.num_states() * self.num_params()
    }

    /// Writes the state graph as an edge list (`u v` per line, `u < v`),
    /// preceded by `# color v c` lines when a coloring is given.
    pub fn write_edge_list<W: Write>(&self, mut w: W, coloring: Option<&Coloring>) -> std::io::Result<()> {
        writeln!(w, "# states {} params {}", self.num_states(), self.num_params())?;
        if let Some(col) = coloring {
            for (v, c) in col.colors().iter().enumerate() {
                writeln!(w, "# color {v} {c}")?;
            }
        }
        for (v, nb) in self.state_adj.iter().enumerate() {
            for &u in nb.iter().filter(|&&u| u > v) {
                writeln!(w, "{v} {u}")?;
            }
        }
        Ok(())
    }
}

/// Color per state vertex.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Coloring {
    colors: Vec<usize>,
    num_colors: usize,
}

impl Coloring {
    pub fn from_colors(colors: Vec<usize>) -> Self {
        let num_colors = colors.iter().max().map_or(0, |&c| c + 1);
        Coloring { colors, num_colors }
    }

    pub fn colors(&self) -> &[usize] {
        &self.colors
    }

    pub fn num_colors(&self) -> usize {
        self.num_colors
    }

    /// Binary seed vector of color `c` over `dimension` variables (states
    /// first).
    pub fn seed(&self, c: usize, dimension: usize) -> Vec<f64> {
        let mut s = vec![0.0; dimension];
        for (v, &cv) in self.colors.iter().enumerate() {
            if cv == c {
                s[v] = 1.0;
            }
        }
        s
    }

    /// Checks properness and the star condition by enumerating every path
    /// on four vertices. Returns the first offending path, if any.
    pub fn find_violation(&self, adj: &[Vec<usize>]) -> Option<Vec<usize>> {
        let col = &self.colors;
        for (v, nb) in adj.iter().enumerate() {
            if let Some(&w) = nb.iter().find(|&&w| col[w] == col[v]) {
                return Some(vec![v, w]);
            }
        }
        for a in 0..adj.len() {
            for &b in &adj[a] {
                for &c in &adj[b] {
                    if c == a || col[c] != col[a] {
                        continue;
                    }
                    for &dd in &adj[c] {
                        if dd != a && dd != b && col[dd] == col[b] {
                            return Some(vec![a, b, c, dd]);
                        }
                    }
                }
            }
        }
        None
    }
}

/// Greedy star coloring of the state graph in natural vertex order.
///
/// Each vertex takes the smallest color that keeps the coloring proper and
/// creates no two-colored path on four vertices through already colored
/// vertices.
pub fn star_coloring(pattern: &SparsityPattern) -> Coloring {
    star_coloring_graph(pattern.state_graph())
}

/// [`star_coloring`] on a bare adjacency list.
pub fn star_coloring_graph(adj: &[Vec<usize>]) -> Coloring {
    const NONE: usize = usize::MAX;
    let n = adj.len();
    let mut col = vec![NONE; n];
    let mut forbidden: Vec<usize> = Vec::new();
    for v in 0..n {
        forbidden.clear();
        // proper, and v as the end of a path v-w-x-y with col(v)=col(x)
        for &w in &adj[v] {
            let cw = col[w];
            if cw == NONE {
                continue;
            }
            forbidden.push(cw);
            for &x in &adj[w] {
                let cx = col[x];
                if x == v || cx == NONE {
                    continue;
                }
                if adj[x].iter().any(|&y| y != w && col[y] == cw) {
                    forbidden.push(cx);
                }
            }
        }
        // v interior: two neighbors w, x sharing a color, and a neighbor y
        // of either one carrying the candidate color
        let mut by_color: HashMap<usize, Vec<usize>> = HashMap::new();
        for &w in &adj[v] {
            if col[w] != NONE {
                by_color.entry(col[w]).or_default().push(w);
            }
        }
        for group in by_color.values().filter(|g| g.len() >= 2) {
            for &w in group {
                for &y in &adj[w] {
                    if y != v && col[y] != NONE {
                        forbidden.push(col[y]);
                    }
                }
            }
        }
        forbidden.sort_unstable();
        forbidden.dedup();
        let mut c = 0;
        for &f in &forbidden {
            if f == c {
                c += 1;
            } else if f > c {
                break;
            }
        }
        col[v] = c;
    }
    Coloring::from_colors(col)
}

/// Second-order information at a fixed point, as consumed by
/// [`assemble_hessian`].
pub trait CurvatureSource {
    fn num_states(&self) -> usize;
    fn num_params(&self) -> usize;
    /// Exact Hessian-vector product over all variables.
    fn hvp(&self, v: &[f64]) -> Result<Vec<f64>>;
    /// State rows of `H·v` for a direction supported on the states only
    /// (`v` has length `num_states`).
    fn state_hvp(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut full = v.to_vec();
        full.resize(self.num_states() + self.num_params(), 0.0);
        let mut out = self.hvp(&full)?;
        out.truncate(self.num_states());
        Ok(out)
    }
    /// Dense state–parameter strip (`ns × np`) and parameter block
    /// (`np × np`), both row-major.
    fn parameter_blocks(&self) -> (Vec<f64>, Vec<f64>);
}

/// Counters from one assembly.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AssemblyStats {
    pub hvp_count: usize,
    pub nnz: usize,
}

/// Exact Hessian-vector product of a curvature source.
pub fn hessian_vector_product<S: CurvatureSource + ?Sized>(source: &S, v: &[f64]) -> Result<Vec<f64>> {
    source.hvp(v)
}

/// Assembles the symmetric Hessian from one HVP per color plus the directly
/// computed parameter blocks.
///
/// `template` may carry a previously assembled matrix with the same
/// structure to avoid rebuilding it.
pub fn assemble_hessian<S: CurvatureSource + ?Sized>(
    source: &S,
    pattern: &SparsityPattern,
    coloring: &Coloring,
    template: Option<SymmetricMatrix>,
) -> Result<(SymmetricMatrix, AssemblyStats)> {
    let ns = pattern.num_states();
    let np = pattern.num_params();
    if source.num_states() != ns || source.num_params() != np {
        return Err(Error::Dimension {
            what: "curvature source",
            expected: pattern.dimension(),
            got: source.num_states() + source.num_params(),
        });
    }
    if coloring.colors().len() != ns {
        return Err(Error::Dimension {
            what: "coloring",
            expected: ns,
            got: coloring.colors().len(),
        });
    }
    let dim = ns + np;
    let mut h = match template {
        Some(t) if t.dim() == dim => t,
        _ => pattern.structure(),
    };
    let col = coloring.colors();
    let mut hv = Vec::with_capacity(coloring.num_colors());
    for c in 0..coloring.num_colors() {
        hv.push(source.state_hvp(&coloring.seed(c, ns))?);
    }

    let adj = pattern.state_graph();
    // number of neighbors of r with each color
    let count_color = |r: usize, c: usize| adj[r].iter().filter(|&&w| col[w] == c).count();
    let (cross, params) = source.parameter_blocks();
    let cp = h.col_ptr().to_vec();
    let ri = h.row_idx().to_vec();
    let vals = h.values_mut();
    for j in 0..dim {
        for p in cp[j]..cp[j + 1] {
            let r = ri[p];
            vals[p] = if j < ns {
                if r == j {
                    hv[col[j]][j]
                } else if count_color(r, col[j]) == 1 {
                    hv[col[j]][r]
                } else if count_color(j, col[r]) == 1 {
                    hv[col[r]][j]
                } else {
                    return Err(Error::AmbiguousRecovery { row: r, col: j });
                }
            } else if r < ns {
                cross[r * np + (j - ns)]
            } else {
                params[(r - ns) * np + (j - ns)]
            };
        }
    }
    let nnz = h.nnz();
    Ok((
        h,
        AssemblyStats {
            hvp_count: hv.len(),
            nnz,
        },
    ))
}
