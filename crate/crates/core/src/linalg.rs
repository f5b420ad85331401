//! Symmetric sparse matrices and a sparse LDLᵀ factorization.
//!
//! Matrices store their upper triangle (diagonal included) in compressed
//! sparse column form. [`LdlSymbolic`] chooses a fill-reducing permutation
//! (dense rows last, reverse Cuthill–McKee on the rest), computes the
//! elimination tree once per sparsity structure, and [`LdlSymbolic::factor`]
//! then performs the numeric up-looking factorization of `P (A + αI) Pᵀ`.
//! Only positive definite matrices are accepted: a nonpositive pivot is
//! reported as [`NotPositiveDefinite`] so that callers can increase the shift.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Symmetric matrix, upper triangle in CSC form with sorted row indices.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricMatrix {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SymmetricMatrix {
    /// Structure from sorted upper-triangular row lists, one per column.
    /// Values start at zero.
    pub fn from_columns(columns: &[Vec<usize>]) -> Result<Self> {
        let n = columns.len();
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for (j, rows) in columns.iter().enumerate() {
            if rows.windows(2).any(|w| w[0] >= w[1]) || rows.last().is_some_and(|&r| r > j) {
                return Err(Error::InvalidArgument(format!("column {j} rows must be sorted and ≤ {j}")));
            }
            row_idx.extend_from_slice(rows);
            col_ptr.push(row_idx.len());
        }
        let nnz = row_idx.len();
        Ok(SymmetricMatrix {
            n,
            col_ptr,
            row_idx,
            values: vec![0.0; nnz],
        })
    }

    /// Upper triangle of a dense row-major `n × n` matrix, keeping every
    /// diagonal entry and nonzero off-diagonal entries.
    pub fn from_dense(n: usize, dense: &[f64]) -> Self {
        assert_eq!(dense.len(), n * n);
        let mut cols = Vec::with_capacity(n);
        for j in 0..n {
            cols.push((0..=j).filter(|&i| i == j || dense[i * n + j] != 0.0).collect::<Vec<_>>());
        }
        let mut m = Self::from_columns(&cols).expect("sorted by construction");
        for j in 0..n {
            for p in m.col_ptr[j]..m.col_ptr[j + 1] {
                m.values[p] = dense[m.row_idx[p] * n + j];
            }
        }
        m
    }

    /// Diagonal matrix.
    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        SymmetricMatrix {
            n,
            col_ptr: (0..=n).collect(),
            row_idx: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Storage index of entry `(i, j)` (either triangle), if structurally present.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        let rows = &self.row_idx[self.col_ptr[c]..self.col_ptr[c + 1]];
        rows.binary_search(&r).ok().map(|k| self.col_ptr[c] + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |p| self.values[p])
    }

    pub fn same_structure(&self, other: &Self) -> bool {
        self.n == other.n && self.col_ptr == other.col_ptr && self.row_idx == other.row_idx
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                let i = self.row_idx[p];
                let v = self.values[p];
                y[i] += v * x[j];
                if i != j {
                    y[j] += v * x[i];
                }
            }
        }
        y
    }

    /// `xᵀ A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.mul_vec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Dense row-major copy (both triangles).
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut d = vec![0.0; n * n];
        for j in 0..n {
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                let i = self.row_idx[p];
                d[i * n + j] = self.values[p];
                d[j * n + i] = self.values[p];
            }
        }
        d
    }
}

/// Raised when a pivot of the LDLᵀ factorization is not strictly positive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NotPositiveDefinite {
    pub pivot: usize,
    pub value: f64,
}

/// Symbolic analysis shared by every matrix with the same structure.
#[derive(Clone, Debug)]
pub struct LdlSymbolic {
    n: usize,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    /// Structure of the permuted upper triangle.
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    /// Original storage index → permuted storage index.
    map: Vec<usize>,
    /// Permuted storage index of each diagonal entry (by permuted column).
    diag_pos: Vec<usize>,
    etree: Vec<Option<usize>>,
    l_col_ptr: Vec<usize>,
    source_col_ptr: Vec<usize>,
    source_row_idx: Vec<usize>,
    arrow: Option<Arrow>,
}

/// Shape of a permuted matrix whose leading `lead` columns form a band of
/// half-width `width` and whose trailing columns are treated as dense.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Arrow {
    lead: usize,
    width: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Cheapest banded-plus-dense-tail split, if it beats the general sparse
/// kernel by the operation-count model below.
fn choose_arrow(n: usize, col_ptr: &[usize], row_idx: &[usize], lnz: &[usize]) -> Option<Arrow> {
    // running bandwidth of the leading block for every split point
    let mut prefix_width = vec![0usize; n + 1];
    for j in 0..n {
        let first = row_idx[col_ptr[j]..col_ptr[j + 1]].iter().copied().min().unwrap_or(j);
        prefix_width[j + 1] = prefix_width[j].max(j - first);
    }
    let general: f64 = lnz.iter().map(|&c| (c * c) as f64).sum::<f64>() * 3.0 + n as f64;
    let mut best: Option<(f64, Arrow)> = None;
    for tail in 1..=n.min(1024) {
        let lead = n - tail;
        let w = prefix_width[lead] as f64;
        let (s, t) = (lead as f64, tail as f64);
        let cost = s * (w * w + w) + 2.0 * t * s * (w + 1.0) + 0.5 * t * t * s + t * t * t / 3.0;
        if best.is_none_or(|(c, _)| cost < c) {
            best = Some((
                cost,
                Arrow {
                    lead,
                    width: prefix_width[lead],
                },
            ));
        }
    }
    best.filter(|&(c, _)| c < general).map(|(_, a)| a)
}

/// Fill-reducing ordering: vertices of very high degree go last in natural
/// order; the remaining graph is ordered by reverse Cuthill–McKee.
pub fn fill_reducing_order(a: &SymmetricMatrix) -> Vec<usize> {
    let n = a.n;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for j in 0..n {
        for p in a.col_ptr[j]..a.col_ptr[j + 1] {
            let i = a.row_idx[p];
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    let threshold = 16usize.max((10.0 * (n as f64).sqrt()) as usize);
    let dense: Vec<bool> = adj.iter().map(|a| a.len() > threshold).collect();
    let degree: Vec<usize> = adj
        .iter()
        .map(|nb| nb.iter().filter(|&&w| !dense[w]).count())
        .collect();
    for nb in adj.iter_mut() {
        nb.retain(|&w| !dense[w]);
        nb.sort_by_key(|&w| (degree[w], w));
    }

    let mut order = Vec::with_capacity(n);
    let mut visited = dense.clone();
    let mut queue = VecDeque::new();
    loop {
        // start each component from a minimum-degree unvisited vertex
        let start = (0..n).filter(|&v| !visited[v]).min_by_key(|&v| (degree[v], v));
        let Some(start) = start else { break };
        let start = pseudo_peripheral(start, &adj, &dense);
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &adj[v] {
                if !visited[w] {
                    visited[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    order.reverse();
    order.extend((0..n).filter(|&v| dense[v]));
    order
}

/// Vertex at (approximately) maximal BFS eccentricity within the component.
fn pseudo_peripheral(start: usize, adj: &[Vec<usize>], dense: &[bool]) -> usize {
    let n = adj.len();
    let mut current = start;
    let mut best_ecc = 0;
    let mut level = vec![usize::MAX; n];
    for _ in 0..8 {
        level.iter_mut().for_each(|l| *l = usize::MAX);
        let mut queue = VecDeque::from([current]);
        level[current] = 0;
        let mut last = current;
        while let Some(v) = queue.pop_front() {
            last = v;
            for &w in &adj[v] {
                if !dense[w] && level[w] == usize::MAX {
                    level[w] = level[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        let ecc = level[last];
        if ecc <= best_ecc && current != start {
            break;
        }
        best_ecc = ecc;
        // among the farthest vertices pick the one with smallest degree
        let far = (0..n)
            .filter(|&v| level[v] == ecc)
            .min_by_key(|&v| (adj[v].len(), v))
            .unwrap_or(last);
        if far == current {
            break;
        }
        current = far;
    }
    current
}

impl LdlSymbolic {
    /// Analyzes the structure of `a` with the default fill-reducing ordering.
    pub fn analyze(a: &SymmetricMatrix) -> Result<Self> {
        Self::with_order(a, fill_reducing_order(a))
    }

    /// Analyzes `a` under an explicit ordering (`perm[new] = old`).
    pub fn with_order(a: &SymmetricMatrix, perm: Vec<usize>) -> Result<Self> {
        let n = a.n;
        if perm.len() != n {
            return Err(Error::Dimension {
                what: "permutation",
                expected: n,
                got: perm.len(),
            });
        }
        let mut inv = vec![usize::MAX; n];
        for (new, &old) in perm.iter().enumerate() {
            if old >= n || inv[old] != usize::MAX {
                return Err(Error::InvalidArgument("ordering is not a permutation".into()));
            }
            inv[old] = new;
        }
        // permuted upper structure
        let mut counts = vec![0usize; n];
        for j in 0..n {
            for p in a.col_ptr[j]..a.col_ptr[j + 1] {
                let (r, c) = (inv[a.row_idx[p]], inv[j]);
                counts[r.max(c)] += 1;
            }
        }
        let mut col_ptr = vec![0usize; n + 1];
        for j in 0..n {
            col_ptr[j + 1] = col_ptr[j] + counts[j];
        }
        let mut next = col_ptr.clone();
        let mut row_idx = vec![0usize; a.nnz()];
        let mut map = vec![0usize; a.nnz()];
        let mut diag_pos = vec![usize::MAX; n];
        for j in 0..n {
            for p in a.col_ptr[j]..a.col_ptr[j + 1] {
                let (r, c) = (inv[a.row_idx[p]], inv[j]);
                let (r, c) = (r.min(c), r.max(c));
                let q = next[c];
                next[c] += 1;
                row_idx[q] = r;
                map[p] = q;
                if r == c {
                    diag_pos[c] = q;
                }
            }
        }
        if let Some(j) = diag_pos.iter().position(|&p| p == usize::MAX) {
            return Err(Error::InvalidArgument(format!("structural diagonal missing in column {}", perm[j])));
        }

        // elimination tree and column counts of L
        let mut etree = vec![None; n];
        let mut lnz = vec![0usize; n];
        let mut flag = vec![usize::MAX; n];
        for j in 0..n {
            flag[j] = j;
            for p in col_ptr[j]..col_ptr[j + 1] {
                let mut i = row_idx[p];
                while i < j && flag[i] != j {
                    if etree[i].is_none() {
                        etree[i] = Some(j);
                    }
                    lnz[i] += 1;
                    flag[i] = j;
                    i = etree[i].expect("set above");
                }
            }
        }
        let mut l_col_ptr = vec![0usize; n + 1];
        for i in 0..n {
            l_col_ptr[i + 1] = l_col_ptr[i] + lnz[i];
        }
        let arrow = choose_arrow(n, &col_ptr, &row_idx, &lnz);
        Ok(LdlSymbolic {
            n,
            perm,
            col_ptr,
            row_idx,
            map,
            diag_pos,
            etree,
            l_col_ptr,
            source_col_ptr: a.col_ptr.clone(),
            source_row_idx: a.row_idx.clone(),
            arrow,
        })
    }

    /// Whether `a` has the structure this analysis was computed for.
    pub fn matches(&self, a: &SymmetricMatrix) -> bool {
        a.n == self.n && a.col_ptr == self.source_col_ptr && a.row_idx == self.source_row_idx
    }

    /// Number of nonzeros in the strictly lower factor.
    pub fn factor_nnz(&self) -> usize {
        self.l_col_ptr[self.n]
    }

    /// Numeric factorization of `a + shift·I`.
    pub fn factor(&self, a: &SymmetricMatrix, shift: f64) -> Result<LdlFactor, NotPositiveDefinite> {
        assert!(self.matches(a), "matrix structure differs from the symbolic analysis");
        let n = self.n;
        let mut ax = vec![0.0; self.row_idx.len()];
        for (p, &q) in self.map.iter().enumerate() {
            ax[q] += a.values[p];
        }
        for &q in &self.diag_pos {
            ax[q] += shift;
        }
        if let Some(arrow) = self.arrow {
            return self.factor_arrow(arrow, &ax);
        }

        let lnz = self.l_col_ptr[n];
        let mut li = vec![0usize; lnz];
        let mut lx = vec![0.0; lnz];
        let mut d = vec![0.0; n];
        let mut dinv = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut used = vec![false; n];
        let mut y_idx = Vec::with_capacity(n);
        let mut stack = Vec::with_capacity(n);
        let mut next_space: Vec<usize> = self.l_col_ptr[..n].to_vec();

        for k in 0..n {
            y_idx.clear();
            for p in self.col_ptr[k]..self.col_ptr[k + 1] {
                let b = self.row_idx[p];
                if b == k {
                    d[k] = ax[p];
                    continue;
                }
                y[b] = ax[p];
                if used[b] {
                    continue;
                }
                used[b] = true;
                stack.clear();
                stack.push(b);
                let mut next = self.etree[b];
                while let Some(v) = next {
                    if v >= k || used[v] {
                        break;
                    }
                    used[v] = true;
                    stack.push(v);
                    next = self.etree[v];
                }
                while let Some(v) = stack.pop() {
                    y_idx.push(v);
                }
            }
            for idx in (0..y_idx.len()).rev() {
                let c = y_idx[idx];
                let yc = y[c];
                let end = next_space[c];
                for q in self.l_col_ptr[c]..end {
                    y[li[q]] -= lx[q] * yc;
                }
                li[end] = k;
                let l = yc * dinv[c];
                lx[end] = l;
                d[k] -= yc * l;
                next_space[c] += 1;
                y[c] = 0.0;
                used[c] = false;
            }
            if !(d[k] > 0.0 && d[k].is_finite()) {
                return Err(NotPositiveDefinite { pivot: self.perm[k], value: d[k] });
            }
            dinv[k] = 1.0 / d[k];
        }
        Ok(LdlFactor {
            perm: self.perm.clone(),
            dinv,
            kind: FactorKind::Sparse {
                l_col_ptr: self.l_col_ptr.clone(),
                li,
                lx,
            },
        })
    }

    /// Right-looking band factorization of the leading block, then a dense
    /// factorization of the Schur complement of the tail.
    fn factor_arrow(&self, arrow: Arrow, ax: &[f64]) -> Result<LdlFactor, NotPositiveDefinite> {
        let n = self.n;
        let Arrow { lead: s, width: w } = arrow;
        let t = n - s;
        let bw = w + 1;
        // band[j * bw + k] = A[j + k][j]
        let mut band = vec![0.0; s * bw];
        // tail coupling, row-major: cross[r * s + j] = A[s + r][j]
        let mut cross = vec![0.0; t * s];
        // dense tail, row-major lower and upper both filled
        let mut tail = vec![0.0; t * t];
        for c in 0..n {
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                let r = self.row_idx[p];
                let v = ax[p];
                if c < s {
                    band[r * bw + (c - r)] = v;
                } else if r < s {
                    cross[(c - s) * s + r] = v;
                } else {
                    tail[(c - s) * t + (r - s)] = v;
                    tail[(r - s) * t + (c - s)] = v;
                }
            }
        }
        let mut d = vec![0.0; n];
        let mut l = vec![0.0; bw];
        for j in 0..s {
            let dj = band[j * bw];
            if !(dj > 0.0 && dj.is_finite()) {
                return Err(NotPositiveDefinite { pivot: self.perm[j], value: dj });
            }
            d[j] = dj;
            let reach = w.min(s - 1 - j);
            for k in 1..=reach {
                l[k] = band[j * bw + k] / dj;
            }
            for b in 1..=reach {
                let f = l[b] * dj;
                if f == 0.0 {
                    continue;
                }
                let row = &mut band[(j + b) * bw..(j + b + 1) * bw];
                for a in b..=reach {
                    row[a - b] -= l[a] * f;
                }
            }
            for k in 1..=reach {
                band[j * bw + k] = l[k];
            }
            for r in 0..t {
                let row = &mut cross[r * s..(r + 1) * s];
                let wr = row[j] / dj;
                row[j] = wr;
                if wr != 0.0 {
                    let f = wr * dj;
                    for k in 1..=reach {
                        row[j + k] -= f * l[k];
                    }
                }
            }
        }
        // Schur complement of the tail
        let scaled: Vec<f64> = cross.iter().enumerate().map(|(e, v)| v * d[e % s.max(1)]).collect();
        for r in 0..t {
            let wr = &cross[r * s..(r + 1) * s];
            for q in 0..=r {
                let vq = &scaled[q * s..(q + 1) * s];
                tail[r * t + q] -= dot(wr, vq);
            }
        }
        // dense LDLᵀ on the lower triangle of the tail
        for j in 0..t {
            let mut dj = tail[j * t + j];
            for k in 0..j {
                dj -= tail[j * t + k] * tail[j * t + k] * d[s + k];
            }
            if !(dj > 0.0 && dj.is_finite()) {
                return Err(NotPositiveDefinite {
                    pivot: self.perm[s + j],
                    value: dj,
                });
            }
            d[s + j] = dj;
            for i in j + 1..t {
                let mut v = tail[i * t + j];
                for k in 0..j {
                    v -= tail[i * t + k] * tail[j * t + k] * d[s + k];
                }
                tail[i * t + j] = v / dj;
            }
        }
        Ok(LdlFactor {
            perm: self.perm.clone(),
            dinv: d.iter().map(|v| 1.0 / v).collect(),
            kind: FactorKind::Arrow {
                lead: s,
                width: w,
                band,
                cross,
                tail,
            },
        })
    }
}

/// Numeric LDLᵀ factor of a permuted symmetric positive definite matrix.
#[derive(Clone, Debug)]
pub struct LdlFactor {
    perm: Vec<usize>,
    dinv: Vec<f64>,
    kind: FactorKind,
}

#[derive(Clone, Debug)]
enum FactorKind {
    Sparse {
        l_col_ptr: Vec<usize>,
        li: Vec<usize>,
        lx: Vec<f64>,
    },
    Arrow {
        lead: usize,
        width: usize,
        band: Vec<f64>,
        cross: Vec<f64>,
        tail: Vec<f64>,
    },
}

impl LdlFactor {
    /// Solves `(A + shift·I) x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.perm.len();
        let mut x: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        match &self.kind {
            FactorKind::Sparse { l_col_ptr, li, lx } => {
                for i in 0..n {
                    let xi = x[i];
                    for q in l_col_ptr[i]..l_col_ptr[i + 1] {
                        x[li[q]] -= lx[q] * xi;
                    }
                }
                for (xi, di) in x.iter_mut().zip(&self.dinv) {
                    *xi *= di;
                }
                for i in (0..n).rev() {
                    let mut s = x[i];
                    for q in l_col_ptr[i]..l_col_ptr[i + 1] {
                        s -= lx[q] * x[li[q]];
                    }
                    x[i] = s;
                }
            }
            FactorKind::Arrow {
                lead,
                width,
                band,
                cross,
                tail,
            } => {
                let (s, w) = (*lead, *width);
                let t = n - s;
                let bw = w + 1;
                for j in 0..s {
                    let xj = x[j];
                    for k in 1..=w.min(s - 1 - j) {
                        x[j + k] -= band[j * bw + k] * xj;
                    }
                }
                for r in 0..t {
                    let row = &cross[r * s..(r + 1) * s];
                    x[s + r] -= dot(row, &x[..s]);
                }
                for i in 0..t {
                    let mut v = x[s + i];
                    for k in 0..i {
                        v -= tail[i * t + k] * x[s + k];
                    }
                    x[s + i] = v;
                }
                for (xi, di) in x.iter_mut().zip(&self.dinv) {
                    *xi *= di;
                }
                for i in (0..t).rev() {
                    let mut v = x[s + i];
                    for k in i + 1..t {
                        v -= tail[k * t + i] * x[s + k];
                    }
                    x[s + i] = v;
                }
                for r in 0..t {
                    let xr = x[s + r];
                    if xr != 0.0 {
                        for (xj, l) in x[..s].iter_mut().zip(&cross[r * s..(r + 1) * s]) {
                            *xj -= l * xr;
                        }
                    }
                }
                for j in (0..s).rev() {
                    let mut v = x[j];
                    for k in 1..=w.min(s - 1 - j) {
                        v -= band[j * bw + k] * x[j + k];
                    }
                    x[j] = v;
                }
            }
        }
        let mut out = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = x[new];
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_solve(n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        // Gaussian elimination with partial pivoting, test oracle only.
        let mut m = a.to_vec();
        let mut x = b.to_vec();
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs())).unwrap();
            for k in 0..n {
                m.swap(col * n + k, piv * n + k);
            }
            x.swap(col, piv);
            for r in col + 1..n {
                let f = m[r * n + col] / m[col * n + col];
                for k in col..n {
                    m[r * n + k] -= f * m[col * n + k];
                }
                x[r] -= f * x[col];
            }
        }
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|k| m[r * n + k] * x[k]).sum();
            x[r] = (x[r] - s) / m[r * n + r];
        }
        x
    }

    fn random_spd(rng: &mut ChaCha8Rng, n: usize, density: f64) -> Vec<f64> {
        let mut a = vec![0.0f64; n * n];
        for i in 0..n {
            for j in 0..i {
                if rng.random_bool(density) {
                    let v = rng.random_range(-1.0..1.0);
                    a[i * n + j] = v;
                    a[j * n + i] = v;
                }
            }
        }
        for i in 0..n {
            let row: f64 = (0..n).map(|j| a[i * n + j].abs()).sum();
            a[i * n + i] = row + rng.random_range(0.1..1.0);
        }
        a
    }

    #[test]
    fn solves_match_dense_elimination() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(n, dens) in &[(1, 0.0), (5, 0.5), (40, 0.1), (120, 0.03)] {
            let a = random_spd(&mut rng, n, dens);
            let m = SymmetricMatrix::from_dense(n, &a);
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let sym = LdlSymbolic::analyze(&m).unwrap();
            let x = sym.factor(&m, 0.0).unwrap().solve(&b);
            let want = dense_solve(n, &a, &b);
            for (u, v) in x.iter().zip(&want) {
                assert!((u - v).abs() < 1e-10 * v.abs().max(1.0));
            }
        }
    }

    #[test]
    fn shift_is_applied() {
        let m = SymmetricMatrix::diagonal(&[1.0, 2.0, 4.0]);
        let sym = LdlSymbolic::analyze(&m).unwrap();
        let x = sym.factor(&m, 1.0).unwrap().solve(&[2.0, 3.0, 5.0]);
        assert_eq!(x, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn indefinite_is_rejected_and_shift_recovers() {
        let a = [1.0, 2.0, 2.0, 1.0];
        let m = SymmetricMatrix::from_dense(2, &a);
        let sym = LdlSymbolic::analyze(&m).unwrap();
        assert!(sym.factor(&m, 0.0).is_err());
        assert!(sym.factor(&m, 1.5).is_ok());
    }

    #[test]
    fn arrowhead_ordering_keeps_band_and_puts_dense_last() {
        // banded block with a dense border, like the hybrid Hessian
        let nb: usize = 300;
        let nd = 4;
        let n = nb + nd;
        let mut cols: Vec<Vec<usize>> = Vec::new();
        for j in 0..n {
            let mut rows: Vec<usize> = if j < nb {
                (j.saturating_sub(2)..=j).collect()
            } else {
                (0..=j).collect()
            };
            rows.dedup();
            cols.push(rows);
        }
        let m = SymmetricMatrix::from_columns(&cols).unwrap();
        let order = fill_reducing_order(&m);
        assert_eq!(&order[nb..], &[nb, nb + 1, nb + 2, nb + 3]);
        let sym = LdlSymbolic::with_order(&m, order).unwrap();
        // band (2 per column) + dense border, no other fill
        assert!(sym.factor_nnz() <= nb * 2 + nd * nb + nd * nd);
        assert_eq!(sym.arrow, Some(Arrow { lead: nb, width: 2 }));
    }

    fn arrow_instance(rng: &mut ChaCha8Rng, nb: usize, half: usize, nd: usize) -> SymmetricMatrix {
        let n = nb + nd;
        let mut dense = vec![0.0f64; n * n];
        for i in 0..n {
            for j in 0..=i {
                let inside = (i < nb && i - j <= half) || i >= nb;
                if inside && i != j && rng.random_bool(0.8) {
                    let v = rng.random_range(-1.0..1.0);
                    dense[i * n + j] = v;
                    dense[j * n + i] = v;
                }
            }
        }
        for i in 0..n {
            dense[i * n + i] = (0..n).map(|j| dense[i * n + j].abs()).sum::<f64>() + 0.5;
        }
        SymmetricMatrix::from_dense(n, &dense)
    }

    #[test]
    fn arrow_kernel_agrees_with_general_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for &(nb, half, nd) in &[(50, 1, 0), (40, 3, 5), (1, 0, 6), (120, 5, 12)] {
            let m = arrow_instance(&mut rng, nb, half, nd);
            let n = nb + nd;
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let perm: Vec<usize> = (0..n).collect();
            let mut sym = LdlSymbolic::with_order(&m, perm).unwrap();
            for split in [nb, n.saturating_sub(1).max(1), 1] {
                sym.arrow = Some(Arrow {
                    lead: n - split.min(n),
                    width: 0,
                });
                // width must cover the leading block
                let lead = sym.arrow.unwrap().lead;
                let width = (0..lead)
                    .map(|j| j - sym.row_idx[sym.col_ptr[j]..sym.col_ptr[j + 1]].iter().min().unwrap())
                    .max()
                    .unwrap_or(0);
                sym.arrow = Some(Arrow { lead, width });
                let x = sym.factor(&m, 0.1).unwrap().solve(&b);
                let r = m.mul_vec(&x);
                for i in 0..n {
                    assert!((r[i] + 0.1 * x[i] - b[i]).abs() < 1e-10, "split {split}");
                }
            }
            sym.arrow = None;
            let x = sym.factor(&m, 0.1).unwrap().solve(&b);
            let r = m.mul_vec(&x);
            assert!((0..n).all(|i| (r[i] + 0.1 * x[i] - b[i]).abs() < 1e-10));
        }
    }

    #[test]
    fn arrow_kernel_reports_indefinite_pivots() {
        let m = SymmetricMatrix::from_dense(3, &[1.0, 0.0, 2.0, 0.0, 1.0, 0.0, 2.0, 0.0, 1.0]);
        let mut sym = LdlSymbolic::with_order(&m, vec![0, 1, 2]).unwrap();
        sym.arrow = Some(Arrow { lead: 2, width: 0 });
        assert!(sym.factor(&m, 0.0).is_err());
        assert!(sym.factor(&m, 1.5).is_ok());
    }

    #[test]
    fn mul_and_dense_round_trip() {
        let a = [4.0, 1.0, 0.0, 1.0, 3.0, 2.0, 0.0, 2.0, 5.0];
        let m = SymmetricMatrix::from_dense(3, &a);
        assert_eq!(m.to_dense(), a.to_vec());
        assert_eq!(m.mul_vec(&[1.0, 1.0, 1.0]), vec![5.0, 6.0, 7.0]);
        assert_eq!(m.get(2, 1), 2.0);
        assert_eq!(m.get(0, 2), 0.0);
    }

    proptest! {
        #[test]
        fn factor_solves_random_spd(seed in 0u64..500, n in 2usize..30) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_spd(&mut rng, n, 0.2);
            let m = SymmetricMatrix::from_dense(n, &a);
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x = LdlSymbolic::analyze(&m).unwrap().factor(&m, 0.0).unwrap().solve(&b);
            let r = m.mul_vec(&x);
            for (u, v) in r.iter().zip(&b) {
                prop_assert!((u - v).abs() < 1e-10);
            }
        }
    }
}
