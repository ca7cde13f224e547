//! Sparse undirected graphs in CSR form.
//!
//! A [`SparseGraph`] stores every undirected edge in both directions, so row
//! `i` lists all neighbors of node `i` with strictly increasing column
//! indices. The same type holds binary adjacencies, their symmetric
//! normalizations, and averages of normalized graphs.

use crate::error::{MqeError, Result};

/// Tolerance used when checking weight symmetry.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseGraph {
    n: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    weights: Vec<f64>,
}

impl SparseGraph {
    /// Builds a graph from `(row, col, weight)` triplets that already list
    /// both directions of every edge. Duplicates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(&(u, v, _)) = triplets.iter().find(|&&(u, v, _)| u >= n || v >= n) {
            return Err(MqeError::Input(format!(
                "edge ({u}, {v}) out of range for {n} nodes"
            )));
        }
        triplets.sort_by_key(|t| (t.0, t.1));

        let mut offsets = vec![0usize; n + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut weights: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (u, v, w) in triplets {
            if last == Some((u, v)) {
                *weights.last_mut().expect("previous entry") += w;
                continue;
            }
            indices.push(v);
            weights.push(w);
            offsets[u + 1] += 1;
            last = Some((u, v));
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        Ok(SparseGraph { n, offsets, indices, weights })
    }

    /// Binary undirected adjacency from an edge list. Both orientations of a
    /// pair collapse to one edge and self-loops are dropped.
    pub fn from_edge_list(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut triplets = Vec::with_capacity(pairs.len() * 2);
        for &(u, v) in pairs {
            if u >= n || v >= n {
                return Err(MqeError::Input(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            if u != v {
                triplets.push((u, v, 1.0));
                triplets.push((v, u, 1.0));
            }
        }
        triplets.sort_by_key(|t| (t.0, t.1));
        triplets.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
        Self::from_triplets(n, triplets)
    }

    pub fn empty(n: usize) -> Self {
        SparseGraph {
            n,
            offsets: vec![0; n + 1],
            indices: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored entries, counting both directions of each edge.
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Number of undirected edges; a self-loop counts once.
    pub fn edge_count(&self) -> usize {
        self.iter().filter(|&(i, j, _)| i <= j).count()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.offsets[i], self.offsets[i + 1]);
        (&self.indices[a..b], &self.weights[a..b])
    }

    /// Number of stored entries in row `i`.
    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n).map(|i| self.degree(i)).collect()
    }

    /// Weighted row sums.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).1.iter().sum()).collect()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let (cols, w) = self.row(i);
        cols.binary_search(&j).ok().map(|k| w[k])
    }

    /// All stored entries as `(row, col, weight)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            let (cols, w) = self.row(i);
            cols.iter().zip(w).map(move |(&j, &w)| (i, j, w))
        })
    }

    /// Undirected edges `(u, v)` with `u < v`.
    pub fn edge_pairs(&self) -> Vec<(usize, usize)> {
        self.iter()
            .filter(|&(i, j, _)| i < j)
            .map(|(i, j, _)| (i, j))
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n]; self.n];
        for (i, j, w) in self.iter() {
            dense[i][j] = w;
        }
        dense
    }

    /// `D^{-1/2} (A + I·[add_self_loops]) D^{-1/2}`, with `D` the row sums of
    /// the (possibly self-looped) matrix.
    pub fn sym_normalize(&self, add_self_loops: bool) -> Result<SparseGraph> {
        let mut triplets: Vec<(usize, usize, f64)> = self.iter().collect();
        if add_self_loops {
            triplets.extend((0..self.n).map(|i| (i, i, 1.0)));
        }
        let looped = SparseGraph::from_triplets(self.n, triplets)?;
        let deg = looped.row_sums();
        if let Some(node) = deg.iter().position(|&d| d <= 0.0) {
            return Err(MqeError::Degenerate {
                node,
                reason: "has zero degree; cannot normalize without self-loops".into(),
            });
        }
        let inv_sqrt: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
        let mut out = looped;
        for i in 0..out.n {
            let (a, b) = (out.offsets[i], out.offsets[i + 1]);
            for k in a..b {
                let j = out.indices[k];
                out.weights[k] *= inv_sqrt[i] * inv_sqrt[j];
            }
        }
        Ok(out)
    }

    /// Entrywise average `(self + other) / 2` over the union pattern.
    pub fn merge_half(&self, other: &SparseGraph) -> Result<SparseGraph> {
        if self.n != other.n {
            return Err(MqeError::Input(format!(
                "cannot merge graphs with {} and {} nodes",
                self.n, other.n
            )));
        }
        let triplets = self
            .iter()
            .chain(other.iter())
            .map(|(i, j, w)| (i, j, 0.5 * w))
            .collect();
        SparseGraph::from_triplets(self.n, triplets)
    }

    /// Checks CSR ordering, index range, finiteness and symmetry.
    pub fn check_invariants(&self) -> Result<()> {
        if self.offsets.len() != self.n + 1 || self.offsets[self.n] != self.indices.len() {
            return Err(MqeError::Input("inconsistent CSR offsets".into()));
        }
        for i in 0..self.n {
            let (cols, w) = self.row(i);
            if cols.windows(2).any(|p| p[0] >= p[1]) {
                return Err(MqeError::Input(format!("row {i} columns not strictly increasing")));
            }
            if cols.iter().any(|&j| j >= self.n) {
                return Err(MqeError::Input(format!("row {i} has column out of range")));
            }
            if w.iter().any(|w| !w.is_finite()) {
                return Err(MqeError::Input(format!("row {i} has a non-finite weight")));
            }
            for (&j, &wij) in cols.iter().zip(w) {
                match self.get(j, i) {
                    Some(wji) if (wij - wji).abs() <= SYMMETRY_TOL => {}
                    _ => {
                        return Err(MqeError::Input(format!(
                            "asymmetric entry ({i}, {j})"
                        )))
                    }
                }
            }
        }
        Ok(())
    }
}
