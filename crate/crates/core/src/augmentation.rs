//! Feature-similarity graph augmentation.
//!
//! Nodes are linked to their `k` most cosine-similar peers under the summed
//! propagated features; the resulting kNN graph is normalized (without
//! self-loops) and averaged with the normalized input graph.

use ndarray::{s, Array2, Axis};
use rayon::prelude::*;

use crate::error::{MqeError, Result};
use crate::graph::SparseGraph;
use crate::propagation::FeatureSet;

/// Rows of the similarity matrix computed per block.
const SIM_BLOCK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KnnConfig {
    pub k: usize,
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig { k: 5 }
    }
}

impl KnnConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 || self.k >= n {
            return Err(MqeError::Config(format!(
                "knn k must satisfy 1 <= k < n (k = {}, n = {n})",
                self.k
            )));
        }
        Ok(())
    }
}

/// Binary kNN graph plus the nodes whose features had zero norm.
#[derive(Debug, Clone)]
pub struct KnnGraph {
    pub graph: SparseGraph,
    pub zero_norm_nodes: Vec<usize>,
}

/// Rows scaled to unit L2 norm; zero rows stay zero.
fn unit_rows(x: &FeatureSet) -> (Array2<f64>, Vec<usize>) {
    let mut out = x.as_array().clone();
    let mut zero = Vec::new();
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row /= norm;
        } else {
            zero.push(i);
        }
    }
    (out, zero)
}

/// All-pairs cosine similarity restricted to rows `start..end`.
fn similarity_block(unit: &Array2<f64>, start: usize, end: usize) -> Array2<f64> {
    let mut sim = unit.slice(s![start..end, ..]).dot(&unit.t());
    sim.mapv_inplace(|v| v.clamp(-1.0, 1.0));
    sim
}

/// Indices of the `k` largest similarities in `row`, excluding `self_idx`.
/// Ties go to the smaller index.
fn top_k(row: &[f64], self_idx: usize, k: usize) -> Vec<usize> {
    let mut cand: Vec<(f64, usize)> = row
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != self_idx)
        .map(|(j, &s)| (s, j))
        .collect();
    let order = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, order);
        cand.truncate(k);
    }
    cand.sort_by(order);
    cand.into_iter().map(|(_, j)| j).collect()
}

/// Symmetric binary kNN graph under cosine similarity of `xstar` rows.
///
/// Each node selects its `k` most similar other nodes; a pair becomes an
/// undirected edge if either endpoint selected the other.
pub fn cosine_knn(xstar: &FeatureSet, cfg: KnnConfig) -> Result<KnnGraph> {
    let n = xstar.n();
    if n < 2 {
        return Err(MqeError::Config(format!("knn graph needs at least 2 nodes, got {n}")));
    }
    cfg.validate(n)?;
    let (unit, zero_norm_nodes) = unit_rows(xstar);
    if !zero_norm_nodes.is_empty() {
        log::warn!(
            "{} node(s) have zero-norm summed features; their kNN picks fall back to lowest indices",
            zero_norm_nodes.len()
        );
    }

    let blocks: Vec<usize> = (0..n).step_by(SIM_BLOCK).collect();
    let picks: Vec<Vec<(usize, usize)>> = blocks
        .par_iter()
        .map(|&start| {
            let end = (start + SIM_BLOCK).min(n);
            let sim = similarity_block(&unit, start, end);
            let mut edges = Vec::with_capacity((end - start) * cfg.k);
            for (r, row) in sim.axis_iter(Axis(0)).enumerate() {
                let i = start + r;
                let row = row.to_vec();
                edges.extend(top_k(&row, i, cfg.k).into_iter().map(|j| (i, j)));
            }
            edges
        })
        .collect();
    let pairs: Vec<(usize, usize)> = picks.into_iter().flatten().collect();
    let graph = SparseGraph::from_edge_list(n, &pairs)?;
    Ok(KnnGraph { graph, zero_norm_nodes })
}

/// `(Â + sym_normalize(knn, no self-loops)) / 2`.
pub fn build_augmented(g_norm: &SparseGraph, knn: &SparseGraph) -> Result<SparseGraph> {
    let knn_norm = knn.sym_normalize(false).map_err(|e| match e {
        MqeError::Degenerate { node, .. } => MqeError::Degenerate {
            node,
            reason: "has no kNN neighbors (kNN construction bug)".into(),
        },
        other => other,
    })?;
    g_norm.merge_half(&knn_norm)
}
