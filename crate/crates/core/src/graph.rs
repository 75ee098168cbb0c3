//! Directed graphs with edge lengths, path counting, and Perron eigendata.
//!
//! Nodes are labeled `1..=n` in all public arguments and returned paths;
//! vectors and matrices are indexed from zero, so position `i` always refers
//! to the node labeled `i + 1`.

use ndarray::{Array1, Array2};

use crate::{Error, Result};

/// Hard cap on the number of paths [`Graph::enumerate_paths`] will produce.
/// Exhaustive enumeration is a verification device for small instances, not
/// a production path; beyond this size the caller should switch to matrix
/// powers.
pub const MAX_ENUMERATED_PATHS: u128 = 1_000_000;

/// Default residual tolerance for [`Graph::perron`] when called through
/// convenience wrappers such as [`Graph::topological_entropy`].
pub const PERRON_TOL: f64 = 1e-13;

/// Default iteration budget for the power method in [`Graph::perron`].
pub const PERRON_MAX_ITER: usize = 100_000;

/// A directed edge between 1-based node labels, with a nonnegative length.
///
/// A zero length is meaningful: it models a cost-free move (most often a
/// self-loop where waiting in place is free), which is what makes
/// length-weighted path measures genuinely temperature dependent on graphs
/// whose ordinary edges all have the same length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub length: f64,
}

impl Edge {
    /// Edge with the default unit length.
    pub fn new(from: usize, to: usize) -> Self {
        Edge {
            from,
            to,
            length: 1.0,
        }
    }

    pub fn with_length(from: usize, to: usize, length: f64) -> Self {
        Edge { from, to, length }
    }
}

/// A directed graph on nodes `1..=n` with nonnegative edge lengths.
///
/// Self-loops are allowed; parallel edges are not. The edge list is kept
/// sorted by `(from, to)` so that all derived quantities (enumeration order,
/// iteration order of solvers) are deterministic regardless of input order.
#[derive(Debug, Clone)]
pub struct Graph {
    n: usize,
    edges: Vec<Edge>,
    /// 0/1 adjacency matrix.
    adjacency: Array2<f64>,
    /// Edge lengths; `+inf` where there is no edge.
    lengths: Array2<f64>,
    /// Out-neighbor lists in ascending order, 0-based.
    out: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from an edge list over nodes `1..=n`.
    ///
    /// Fails if `n < 2`, if any endpoint is outside `1..=n`, if any length
    /// is negative or non-finite, or if an edge is repeated.
    pub fn new(n: usize, edges: &[Edge]) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGraph(format!(
                "need at least 2 nodes, got {n}"
            )));
        }
        let mut sorted: Vec<Edge> = edges.to_vec();
        sorted.sort_by(|a, b| (a.from, a.to).cmp(&(b.from, b.to)));
        let mut adjacency = Array2::zeros((n, n));
        let mut lengths = Array2::from_elem((n, n), f64::INFINITY);
        let mut out = vec![Vec::new(); n];
        for (k, e) in sorted.iter().enumerate() {
            if e.from < 1 || e.from > n || e.to < 1 || e.to > n {
                return Err(Error::InvalidGraph(format!(
                    "edge {} -> {} outside node range 1..={n}",
                    e.from, e.to
                )));
            }
            if !(e.length >= 0.0 && e.length.is_finite()) {
                return Err(Error::InvalidGraph(format!(
                    "edge {} -> {} has invalid length {}",
                    e.from, e.to, e.length
                )));
            }
            if k > 0 && sorted[k - 1].from == e.from && sorted[k - 1].to == e.to {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge {} -> {}",
                    e.from, e.to
                )));
            }
            let (i, j) = (e.from - 1, e.to - 1);
            adjacency[[i, j]] = 1.0;
            lengths[[i, j]] = e.length;
            out[i].push(j);
        }
        Ok(Graph {
            n,
            edges: sorted,
            adjacency,
            lengths,
            out,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Edges sorted by `(from, to)`.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// 0/1 adjacency matrix; position `(i, j)` refers to nodes `i+1 -> j+1`.
    pub fn adjacency(&self) -> &Array2<f64> {
        &self.adjacency
    }

    /// Edge-length matrix with `+inf` where there is no edge.
    pub fn lengths(&self) -> &Array2<f64> {
        &self.lengths
    }

    /// Ascending 0-based out-neighbors of 0-based node `i`.
    pub(crate) fn out_neighbors(&self, i: usize) -> &[usize] {
        &self.out[i]
    }

    /// True when every node can reach every other node along directed edges.
    pub fn is_strongly_connected(&self) -> bool {
        self.reaches_all_forward() && self.reaches_all_backward()
    }

    fn reaches_all_forward(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &j in &self.out[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    fn reaches_all_backward(&self) -> bool {
        let mut rev = vec![Vec::new(); self.n];
        for e in &self.edges {
            rev[e.to - 1].push(e.from - 1);
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &j in &rev[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    /// Number of directed walks of exactly `t` steps between every node pair,
    /// i.e. the `t`-th power of the adjacency matrix in exact integer
    /// arithmetic. `t = 0` gives the identity.
    pub fn count_paths(&self, t: usize) -> Result<Array2<u128>> {
        let a: Array2<u128> = self.adjacency.mapv(|x| x as u128);
        let mut acc = Array2::from_shape_fn((self.n, self.n), |(i, j)| u128::from(i == j));
        for step in 1..=t {
            let mut next: Array2<u128> = Array2::zeros((self.n, self.n));
            for i in 0..self.n {
                for k in 0..self.n {
                    let aik = acc[[i, k]];
                    if aik == 0 {
                        continue;
                    }
                    for &j in &self.out[k] {
                        let add = aik
                            .checked_mul(a[[k, j]])
                            .and_then(|m| next[[i, j]].checked_add(m));
                        match add {
                            Some(v) => next[[i, j]] = v,
                            None => return Err(Error::PathCountOverflow { t: step }),
                        }
                    }
                }
            }
            acc = next;
        }
        Ok(acc)
    }

    /// All directed walks of exactly `t` steps from node `i` to node `j`
    /// (1-based labels), each returned as the `t + 1` visited labels, in
    /// lexicographic order. Guarded by [`MAX_ENUMERATED_PATHS`].
    pub fn enumerate_paths(&self, i: usize, j: usize, t: usize) -> Result<Vec<Vec<usize>>> {
        self.check_label(i)?;
        self.check_label(j)?;
        let total = match self.count_paths(t) {
            Ok(counts) => counts[[i - 1, j - 1]],
            // Overflow means far beyond any enumerable size.
            Err(Error::PathCountOverflow { .. }) => {
                return Err(Error::PathEnumerationCap {
                    cap: MAX_ENUMERATED_PATHS as usize,
                })
            }
            Err(e) => return Err(e),
        };
        if total > MAX_ENUMERATED_PATHS {
            return Err(Error::PathEnumerationCap {
                cap: MAX_ENUMERATED_PATHS as usize,
            });
        }
        let mut found = Vec::with_capacity(total as usize);
        let mut prefix = vec![i];
        self.extend_path(&mut prefix, j - 1, t, &mut found);
        Ok(found)
    }

    fn extend_path(
        &self,
        prefix: &mut Vec<usize>,
        target: usize,
        t: usize,
        found: &mut Vec<Vec<usize>>,
    ) {
        if prefix.len() == t + 1 {
            if prefix[t] == target + 1 {
                found.push(prefix.clone());
            }
            return;
        }
        let cur = prefix[prefix.len() - 1] - 1;
        for &next in &self.out[cur] {
            prefix.push(next + 1);
            self.extend_path(prefix, target, t, found);
            prefix.pop();
        }
    }

    /// Perron eigendata of the adjacency matrix: the spectral radius
    /// `lambda` together with strictly positive left and right eigenvectors
    /// `u`, `v`, scaled so that `sum(v) = 1` and `dot(u, v) = 1`.
    ///
    /// The power method runs on `A + I`, which is primitive whenever the
    /// graph is strongly connected, so the iteration converges even for
    /// periodic graphs (e.g. plain cycles); the shift is undone in the
    /// returned eigenvalue. Residuals `|A v - lambda v|` and
    /// `|u A - lambda u|` must drop below `tol` in the max norm.
    pub fn perron(&self, tol: f64, max_iter: usize) -> Result<PerronData> {
        if !self.is_strongly_connected() {
            return Err(Error::NotStronglyConnected);
        }
        let n = self.n;
        let a = &self.adjacency;
        let at = a.t();
        let mut v = Array1::from_elem(n, 1.0 / n as f64);
        let mut u = Array1::from_elem(n, 1.0);
        let mut gap = f64::INFINITY;
        for _ in 0..max_iter {
            // One shifted step for each side: w = (A + I) x = A x + x.
            let mut bv = a.dot(&v) + &v;
            let sv = bv.sum();
            bv.mapv_inplace(|x| x / sv);
            v = bv;
            let mut bu = at.dot(&u) + &u;
            let du = bu.dot(&v);
            bu.mapv_inplace(|x| x / du);
            u = bu;
            let lambda = u.dot(&a.dot(&v));
            let rv = (a.dot(&v) - &(lambda * &v))
                .iter()
                .fold(0.0f64, |m, x| m.max(x.abs()));
            let ru = (at.dot(&u) - &(lambda * &u))
                .iter()
                .fold(0.0f64, |m, x| m.max(x.abs()));
            gap = rv.max(ru);
            if gap < tol {
                return Ok(PerronData { lambda, u, v });
            }
        }
        Err(Error::NonConvergence {
            method: "perron power iteration",
            iterations: max_iter,
            gap,
        })
    }

    /// Topological entropy `ln(lambda)` of the walk ensemble, `lambda` being
    /// the adjacency spectral radius. Requires strong connectivity.
    pub fn topological_entropy(&self) -> Result<f64> {
        let p = self.perron(PERRON_TOL, PERRON_MAX_ITER)?;
        Ok(p.lambda.ln())
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label < 1 || label > self.n {
            return Err(Error::InvalidGraph(format!(
                "node label {label} outside 1..={}",
                self.n
            )));
        }
        Ok(())
    }
}

/// Spectral radius and positive eigenvector pair returned by [`Graph::perron`].
#[derive(Debug, Clone)]
pub struct PerronData {
    /// Spectral radius of the adjacency matrix.
    pub lambda: f64,
    /// Left eigenvector, scaled so `dot(u, v) = 1`.
    pub u: Array1<f64>,
    /// Right eigenvector, scaled so `sum(v) = 1`.
    pub v: Array1<f64>,
}
