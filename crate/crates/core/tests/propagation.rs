mod common;

use common::*;
use mqe_core::augmentation::{build_augmented, cosine_knn, KnnConfig};
use mqe_core::graph::SparseGraph;
use mqe_core::propagation::{propagate_stack, summed_features, FeatureSet};
use rand::Rng;

#[test]
fn sparse_stack_matches_dense_powers() {
    let mut r = rng(42);
    for case in 0..50 {
        let n = r.random_range(1..=8);
        let d = r.random_range(1..=4);
        let hops = r.random_range(0..=5);
        let edges = random_edges(&mut r, n, 0.4);
        let x = random_matrix(&mut r, n, d, 2.0);
        let a = dense_normalized(n, &edges);
        let g = SparseGraph::from_edge_list(n, &edges).unwrap().sym_normalize(true).unwrap();
        let stack = propagate_stack(&g, &FeatureSet::new(x.clone()).unwrap(), hops).unwrap();
        let mut want = x;
        for l in 0..=hops {
            if l > 0 {
                want = a.dot(&want);
            }
            for (got, exp) in stack.layer(l).as_array().iter().zip(&want) {
                assert!((got - exp).abs() <= 1e-10, "case {case} hop {l}: {got} vs {exp}");
            }
        }
    }
}

#[test]
fn augmented_operator_matches_dense_average() {
    let mut r = rng(3);
    for _ in 0..20 {
        let n = r.random_range(3..=12);
        let edges = random_edges(&mut r, n, 0.3);
        let x = FeatureSet::new(random_matrix(&mut r, n, 3, 1.0)).unwrap();
        let g = SparseGraph::from_edge_list(n, &edges).unwrap().sym_normalize(true).unwrap();
        let stack = propagate_stack(&g, &x, 2).unwrap();
        let knn = cosine_knn(&summed_features(&stack), KnnConfig { k: 2 }).unwrap();
        let a_star = build_augmented(&g, &knn.graph).unwrap();
        a_star.check_invariants().unwrap();

        let knn_dense = dense_of(&knn.graph);
        let deg: Vec<f64> = (0..n).map(|i| knn_dense.row(i).sum()).collect();
        let a_dense = dense_normalized(n, &edges);
        let got = dense_of(&a_star);
        for i in 0..n {
            for j in 0..n {
                let s = knn_dense[[i, j]] / (deg[i] * deg[j]).sqrt();
                let want = 0.5 * (a_dense[[i, j]] + s);
                assert!((got[[i, j]] - want).abs() < 1e-12);
            }
        }
    }
}
