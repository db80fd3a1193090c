//! Mode digraphs, Laplacians, the union/mirror construction and the
//! minimum-cut and weighted-Laplacian diagnostics used by the convergence
//! analysis.
//!
//! Adjacency convention: `a[(i, j)] > 0` means agent `i` receives agent
//! `j`'s information with weight `a_ij` (edge `j → i`).

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg;

/// Largest node count accepted by the exhaustive cut enumeration.
pub const MAX_CUT_NODES: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("adjacency matrix must be square and non-empty, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("adjacency entry ({row}, {col}) = {value} is negative or not finite")]
    NegativeWeight { row: usize, col: usize, value: f64 },
    #[error("adjacency diagonal entry {index} = {value} must be zero")]
    SelfLoop { index: usize, value: f64 },
    #[error("topology needs at least one mode")]
    NoModes,
    #[error("mode {mode} has {found} agents, expected {expected}")]
    ModeSizeMismatch { mode: usize, expected: usize, found: usize },
    #[error("minimum cut enumeration limited to {max} nodes, got {n}")]
    TooLarge { n: usize, max: usize },
    #[error("minimum cut needs a symmetric matrix with at least two nodes")]
    BadMirror,
    #[error("weights must be positive with length {expected}")]
    BadWeights { expected: usize },
    #[error("vector must be orthogonal to the weights: |πᵀζ| = {residual:e}")]
    NotOrthogonal { residual: f64 },
    #[error("union digraph is not strongly connected; no positive stationary weights")]
    NotStronglyConnected,
}

/// One topology mode: `N` agents and their weighted in-adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeDigraph {
    adjacency: DMatrix<f64>,
}

impl ModeDigraph {
    pub fn new(adjacency: DMatrix<f64>) -> Result<Self, GraphError> {
        let (rows, cols) = adjacency.shape();
        if rows != cols || rows == 0 {
            return Err(GraphError::NotSquare { rows, cols });
        }
        for i in 0..rows {
            for j in 0..cols {
                let value = adjacency[(i, j)];
                if !(value.is_finite() && value >= 0.0) {
                    return Err(GraphError::NegativeWeight { row: i, col: j, value });
                }
            }
            if adjacency[(i, i)] != 0.0 {
                return Err(GraphError::SelfLoop { index: i, value: adjacency[(i, i)] });
            }
        }
        Ok(Self { adjacency })
    }

    /// Builds a digraph from directed edges `(from, to)` (0-based) with unit weight.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut a = DMatrix::zeros(n, n);
        for &(from, to) in edges {
            a[(to, from)] = 1.0;
        }
        Self::new(a)
    }

    pub fn n_agents(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    /// In-neighbour weights of agent `i`.
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.adjacency.row(i).iter().cloned().collect()
    }

    pub fn laplacian(&self) -> DMatrix<f64> {
        laplacian(self)
    }
}

/// `l_ii = Σ_j a_ij`, `l_ij = -a_ij`.
pub fn laplacian(g: &ModeDigraph) -> DMatrix<f64> {
    let a = &g.adjacency;
    let mut l = -a.clone();
    for i in 0..a.nrows() {
        l[(i, i)] = a.row(i).sum();
    }
    l
}

/// Ordered list of modes sharing one node set.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingTopology {
    modes: Vec<ModeDigraph>,
}

impl SwitchingTopology {
    pub fn new(modes: Vec<ModeDigraph>) -> Result<Self, GraphError> {
        let first = modes.first().ok_or(GraphError::NoModes)?;
        let expected = first.n_agents();
        for (mode, g) in modes.iter().enumerate() {
            if g.n_agents() != expected {
                return Err(GraphError::ModeSizeMismatch { mode, expected, found: g.n_agents() });
            }
        }
        Ok(Self { modes })
    }

    pub fn n_agents(&self) -> usize {
        self.modes[0].n_agents()
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn modes(&self) -> &[ModeDigraph] {
        &self.modes
    }

    pub fn mode(&self, p: usize) -> &ModeDigraph {
        &self.modes[p]
    }

    pub fn laplacians(&self) -> Vec<DMatrix<f64>> {
        self.modes.iter().map(laplacian).collect()
    }

    pub fn union_laplacian(&self) -> DMatrix<f64> {
        let n = self.n_agents();
        self.modes
            .iter()
            .fold(DMatrix::zeros(n, n), |acc, g| acc + laplacian(g))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnionMirror {
    pub union_laplacian: DMatrix<f64>,
    pub mirror: DMatrix<f64>,
    pub union_strongly_connected: bool,
}

/// Union Laplacian `Σ_p L_p`, its mirror `(L_un + L_unᵀ)/2`, and strong
/// connectivity of the union digraph.
pub fn union_mirror(t: &SwitchingTopology) -> UnionMirror {
    let union_laplacian = t.union_laplacian();
    let mirror = linalg::sym(&union_laplacian);
    let union_strongly_connected = strongly_connected(&union_laplacian);
    UnionMirror { union_laplacian, mirror, union_strongly_connected }
}

/// Strong connectivity of the digraph whose edges are the nonzero
/// off-diagonal entries of `m` (`m[(i, j)] != 0` is an edge `j → i`).
pub fn strongly_connected(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                let w = if forward { m[(v, u)] } else { m[(u, v)] };
                if v != u && w != 0.0 && !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    n > 0 && reach(true) && reach(false)
}

/// Minimizing cut of a mirror graph.
#[derive(Debug, Clone, PartialEq)]
pub struct CutReport {
    pub cut_value: f64,
    /// 0-based node indices of the minimizing subset.
    pub witness: Vec<usize>,
}

/// Exhaustive minimum cut over every nonempty proper subset, with edge
/// weight `w_ij = -L_s[i][j]`.
///
/// Subsets are visited in Gray-code order so each step updates the cut in
/// `O(N)`.
pub fn minimum_cut(mirror: &DMatrix<f64>) -> Result<CutReport, GraphError> {
    let n = mirror.nrows();
    if n > MAX_CUT_NODES {
        return Err(GraphError::TooLarge { n, max: MAX_CUT_NODES });
    }
    if n < 2 || !linalg::is_symmetric(mirror, 1e-12) {
        return Err(GraphError::BadMirror);
    }
    let w = |i: usize, j: usize| if i == j { 0.0 } else { -mirror[(i, j)] };
    let total = 1u64 << n;
    let mut member = vec![false; n];
    let mut cut = 0.0;
    let mut best: Option<(f64, u64)> = None;
    let mut prev_gray = 0u64;
    for k in 1..total {
        let gray = k ^ (k >> 1);
        let v = (gray ^ prev_gray).trailing_zeros() as usize;
        prev_gray = gray;
        if member[v] {
            member[v] = false;
            for j in 0..n {
                if j == v {
                    continue;
                }
                if member[j] {
                    cut += w(j, v);
                } else {
                    cut -= w(v, j);
                }
            }
        } else {
            for j in 0..n {
                if j == v {
                    continue;
                }
                if member[j] {
                    cut -= w(j, v);
                } else {
                    cut += w(v, j);
                }
            }
            member[v] = true;
        }
        if gray == total - 1 {
            continue;
        }
        if best.is_none_or(|(b, _)| cut < b - 1e-12) {
            best = Some((cut, gray));
        }
    }
    let (cut_value, mask) = best.expect("n >= 2 gives at least one proper subset");
    let witness = (0..n).filter(|i| mask >> i & 1 == 1).collect();
    Ok(CutReport { cut_value: cut_value.max(0.0), witness })
}

/// Positive weights `π` (summing to one) with `πᵀ L_un = 0`, the common
/// stationary distribution of the Laplacian family.
pub fn stationary_weights(t: &SwitchingTopology) -> Result<DVector<f64>, GraphError> {
    let l_un = t.union_laplacian();
    if !strongly_connected(&l_un) {
        return Err(GraphError::NotStronglyConnected);
    }
    // -L_un is a valid rate matrix; its stationary law is the left null vector.
    let generator = crate::markov::GeneratorMatrix::new(-l_un)
        .map_err(|_| GraphError::NotStronglyConnected)?;
    crate::markov::stationary_distribution(&generator).map_err(|_| GraphError::NotStronglyConnected)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma1Report {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Evaluates `ζᵀQζ ≥ (π_min c / N²)‖ζ‖²` with `Q = diag(π)L_un + L_unᵀdiag(π)`
/// and `c` the minimum cut of the union mirror.
pub fn lemma1_check(
    t: &SwitchingTopology,
    pi: &DVector<f64>,
    zeta: &DVector<f64>,
) -> Result<Lemma1Report, GraphError> {
    let n = t.n_agents();
    if pi.len() != n || zeta.len() != n || pi.iter().any(|&p| !(p > 0.0)) {
        return Err(GraphError::BadWeights { expected: n });
    }
    let residual = pi.dot(zeta).abs();
    if residual > 1e-10 {
        return Err(GraphError::NotOrthogonal { residual });
    }
    let um = union_mirror(t);
    let c = if n >= 2 { minimum_cut(&um.mirror)?.cut_value } else { 0.0 };
    let pi_diag = DMatrix::from_diagonal(pi);
    let q = &pi_diag * &um.union_laplacian + um.union_laplacian.transpose() * &pi_diag;
    let lhs = (zeta.transpose() * q * zeta)[(0, 0)];
    let pi_min = pi.iter().cloned().fold(f64::INFINITY, f64::min);
    let rhs = pi_min * c / (n * n) as f64 * zeta.norm_squared();
    Ok(Lemma1Report { lhs, rhs, holds: lhs >= rhs - 1e-9 })
}
