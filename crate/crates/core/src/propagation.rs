//! Dense node features and non-parameterized multi-hop propagation.

use std::io::{Read, Write};

use ndarray::{Array2, ArrayView1, ArrayView2, Zip};
use rayon::prelude::*;

use crate::error::{MqeError, Result};
use crate::graph::SparseGraph;

/// Dense `n × d` matrix of finite node features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    data: Array2<f64>,
}

impl FeatureSet {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            let d = data.ncols().max(1);
            return Err(MqeError::Input(format!(
                "non-finite feature at node {}, column {}",
                pos / d,
                pos % d
            )));
        }
        // Owned arrays from ndarray may be non-contiguous after slicing.
        Ok(FeatureSet { data: data.as_standard_layout().into_owned() })
    }

    pub fn zeros(n: usize, d: usize) -> Self {
        FeatureSet { data: Array2::zeros((n, d)) }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != d) {
            return Err(MqeError::Input(format!(
                "row {i} has {} columns, expected {d}",
                rows[i].len()
            )));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let data = Array2::from_shape_vec((rows.len(), d), flat)
            .map_err(|e| MqeError::Input(e.to_string()))?;
        Self::new(data)
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn d(&self) -> usize {
        self.data.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_array(self) -> Array2<f64> {
        self.data
    }

    fn as_slice(&self) -> &[f64] {
        self.data.as_slice().expect("standard layout")
    }
}

/// Features after `0..=L` propagation steps; layer 0 is the input.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatedStack {
    layers: Vec<FeatureSet>,
}

impl PropagatedStack {
    pub fn from_layers(layers: Vec<FeatureSet>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| MqeError::Input("a stack needs at least one layer".into()))?;
        let (n, d) = (first.n(), first.d());
        if layers.iter().any(|l| l.n() != n || l.d() != d) {
            return Err(MqeError::Input("stack layers differ in shape".into()));
        }
        Ok(PropagatedStack { layers })
    }

    /// Maximum propagation step `L`.
    pub fn hops(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn layer(&self, hop: usize) -> &FeatureSet {
        &self.layers[hop]
    }

    pub fn layers(&self) -> &[FeatureSet] {
        &self.layers
    }

    pub fn n(&self) -> usize {
        self.layers[0].n()
    }

    pub fn d(&self) -> usize {
        self.layers[0].d()
    }

    /// Writes `(L+1, n, d)` as little-endian u64 followed by all layers as
    /// little-endian f32, row-major.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for dim in [self.layers.len(), self.n(), self.d()] {
            w.write_all(&(dim as u64).to_le_bytes())?;
        }
        for layer in &self.layers {
            for &v in layer.as_slice() {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        w.flush()
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let io = |e| MqeError::Data(format!("stack file: {e}"));
        let mut header = [0u8; 24];
        r.read_exact(&mut header).map_err(io)?;
        let dim = |k: usize| u64::from_le_bytes(header[8 * k..8 * k + 8].try_into().unwrap()) as usize;
        let (count, n, d) = (dim(0), dim(1), dim(2));
        let mut layers = Vec::with_capacity(count);
        let mut buf = vec![0u8; n * d * 4];
        for _ in 0..count {
            r.read_exact(&mut buf).map_err(io)?;
            let vals: Vec<f64> = buf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect();
            let arr = Array2::from_shape_vec((n, d), vals).map_err(|e| MqeError::Data(e.to_string()))?;
            layers.push(FeatureSet::new(arr)?);
        }
        Self::from_layers(layers)
    }
}

/// One propagation step `g · x`. Rows are independent and each row
/// accumulates its neighbors left to right, so the result does not depend on
/// the thread count.
pub fn propagate_once(g: &SparseGraph, x: &FeatureSet) -> Result<FeatureSet> {
    if g.n() != x.n() {
        return Err(MqeError::Input(format!(
            "graph has {} nodes but features have {} rows",
            g.n(),
            x.n()
        )));
    }
    let d = x.d();
    let src = x.as_slice();
    let mut out = vec![0.0f64; x.n() * d];
    if d > 0 {
        out.par_chunks_mut(d).enumerate().for_each(|(i, dst)| {
            let (cols, w) = g.row(i);
            for (&j, &wij) in cols.iter().zip(w) {
                let xj = &src[j * d..(j + 1) * d];
                for (o, &v) in dst.iter_mut().zip(xj) {
                    *o += wij * v;
                }
            }
        });
    }
    let data = Array2::from_shape_vec((x.n(), d), out).expect("shape");
    Ok(FeatureSet { data })
}

/// Layers `x, g·x, …, g^L·x` computed by repeated sparse products.
pub fn propagate_stack(g: &SparseGraph, x: &FeatureSet, hops: usize) -> Result<PropagatedStack> {
    let mut layers = Vec::with_capacity(hops + 1);
    layers.push(x.clone());
    for _ in 0..hops {
        let next = propagate_once(g, layers.last().expect("nonempty"))?;
        layers.push(next);
    }
    Ok(PropagatedStack { layers })
}

/// Elementwise sum of all layers of the stack.
pub fn summed_features(stack: &PropagatedStack) -> FeatureSet {
    let mut acc = stack.layers[0].data.clone();
    for layer in &stack.layers[1..] {
        Zip::from(&mut acc).and(&layer.data).for_each(|a, &b| *a += b);
    }
    FeatureSet { data: acc }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn two_node() -> SparseGraph {
        SparseGraph::from_edge_list(2, &[(0, 1)])
            .unwrap()
            .sym_normalize(true)
            .unwrap()
    }

    #[test]
    fn two_node_single_hop() {
        let x = FeatureSet::new(array![[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let stack = propagate_stack(&two_node(), &x, 1).unwrap();
        let close = |a: &Array2<f64>, b: Array2<f64>| a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-15);
        assert!(close(stack.layer(1).as_array(), array![[0.5, 0.5], [0.5, 0.5]]));
        assert!(close(summed_features(&stack).as_array(), array![[1.5, 0.5], [0.5, 1.5]]));
    }

    #[test]
    fn zero_hops_keeps_input_only() {
        let x = FeatureSet::new(array![[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let stack = propagate_stack(&two_node(), &x, 0).unwrap();
        assert_eq!(stack.hops(), 0);
        assert_eq!(stack.layer(0), &x);
        assert_eq!(summed_features(&stack), x);
    }

    #[test]
    fn dimension_mismatch_is_an_input_error() {
        let x = FeatureSet::zeros(3, 2);
        assert!(matches!(propagate_stack(&two_node(), &x, 1), Err(MqeError::Input(_))));
    }

    #[test]
    fn rejects_non_finite_features() {
        assert!(FeatureSet::new(array![[1.0, f64::NAN]]).is_err());
        assert!(FeatureSet::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn stack_binary_round_trip() {
        let x = FeatureSet::new(array![[1.0, -2.5], [0.25, 4.0]]).unwrap();
        let stack = propagate_stack(&two_node(), &x, 2).unwrap();
        let mut buf = Vec::new();
        stack.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 24 + 3 * 2 * 2 * 4);
        assert_eq!(&buf[..8], &3u64.to_le_bytes());
        let back = PropagatedStack::read_from(&buf[..]).unwrap();
        for (a, b) in back.layers().iter().zip(stack.layers()) {
            let want = b.as_array().mapv(|v| v as f32 as f64);
            assert_eq!(a.as_array(), &want);
        }
    }

    fn arb_case() -> impl Strategy<Value = (SparseGraph, FeatureSet, FeatureSet, f64, f64)> {
        (2usize..10, 1usize..4).prop_flat_map(|(n, d)| {
            (
                proptest::collection::vec((0..n, 0..n), 0..2 * n),
                proptest::collection::vec(-5.0f64..5.0, n * d),
                proptest::collection::vec(-5.0f64..5.0, n * d),
                -3.0f64..3.0,
                -3.0f64..3.0,
            )
                .prop_map(move |(pairs, xs, ys, a, b)| {
                    let g = SparseGraph::from_edge_list(n, &pairs)
                        .unwrap()
                        .sym_normalize(true)
                        .unwrap();
                    let x = FeatureSet::new(Array2::from_shape_vec((n, d), xs).unwrap()).unwrap();
                    let y = FeatureSet::new(Array2::from_shape_vec((n, d), ys).unwrap()).unwrap();
                    (g, x, y, a, b)
                })
        })
    }

    proptest! {
        #[test]
        fn propagation_is_linear((g, x, y, a, b) in arb_case()) {
            let combo = FeatureSet::new(x.as_array() * a + y.as_array() * b).unwrap();
            let sx = propagate_stack(&g, &x, 4).unwrap();
            let sy = propagate_stack(&g, &y, 4).unwrap();
            let sc = propagate_stack(&g, &combo, 4).unwrap();
            for l in 0..=4 {
                let expect = sx.layer(l).as_array() * a + sy.layer(l).as_array() * b;
                for (u, v) in sc.layer(l).as_array().iter().zip(expect.iter()) {
                    prop_assert!((u - v).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn sqrt_degree_vector_is_fixed((g, x, _y, _a, _b) in arb_case()) {
            // Self-looped degree is the number of stored entries of the normalized row.
            let d = x.d();
            let data = Array2::from_shape_fn((g.n(), d), |(i, _)| (g.degree(i) as f64).sqrt());
            let fixed = FeatureSet::new(data).unwrap();
            let stack = propagate_stack(&g, &fixed, 5).unwrap();
            for l in 1..=5 {
                for (u, v) in stack.layer(l).as_array().iter().zip(fixed.as_array().iter()) {
                    prop_assert!((u - v).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn summed_matches_naive_loop((g, x, _y, _a, _b) in arb_case()) {
            let stack = propagate_stack(&g, &x, 3).unwrap();
            let sum = summed_features(&stack);
            for i in 0..x.n() {
                for j in 0..x.d() {
                    let mut acc = 0.0;
                    for l in 0..=3 {
                        acc += stack.layer(l).as_array()[[i, j]];
                    }
                    prop_assert_eq!(sum.as_array()[[i, j]], acc);
                }
            }
        }
    }
}
