#![allow(dead_code)]

use mqe_core::config::{ConfigMap, ExperimentConfig};
use mqe_core::estimator::{backward, nll_loss, LossConfig, ModelDims, MqeModel, Targets};
use mqe_core::graph::SparseGraph;
use mqe_core::propagation::{FeatureSet, PropagatedStack};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random symmetric edge list on `n` nodes without self-loops.
pub fn random_edges(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    edges
}

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| rng.random_range(-scale..scale))
}

/// Dense `D̃^{-1/2}(A+I)D̃^{-1/2}` built entry by entry.
pub fn dense_normalized(n: usize, edges: &[(usize, usize)]) -> Array2<f64> {
    let mut a = Array2::<f64>::eye(n);
    for &(i, j) in edges {
        a[[i, j]] = 1.0;
        a[[j, i]] = 1.0;
    }
    let deg: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
    Array2::from_shape_fn((n, n), |(i, j)| a[[i, j]] / (deg[i] * deg[j]).sqrt())
}

/// Random tiny model, targets drawn independently of the model.
pub fn tiny_instance(seed: u64, cfg_hops: usize) -> (MqeModel<f64>, Targets<f64>) {
    let mut r = rng(seed);
    let n = r.random_range(2..=5);
    let d = r.random_range(1..=4);
    let f = r.random_range(1..=3);
    let h = r.random_range(1..=4);
    let dims = ModelDims { n, d, f, h, hops: cfg_hops };
    let mut model = MqeModel::<f64>::init(dims, seed, 1e-3).unwrap();
    // Nonzero biases so that every code path carries gradient.
    for hop in &mut model.hops {
        for mlp in [&mut hop.mean, &mut hop.scale] {
            mlp.b1.mapv_inplace(|_| r.random_range(-0.3..0.3));
            mlp.b2.mapv_inplace(|_| r.random_range(-0.3..0.3));
        }
    }
    let layers = (0..=cfg_hops)
        .map(|_| FeatureSet::new(random_matrix(&mut r, n, d, 1.0)).unwrap())
        .collect();
    let targets = Targets::from_stack(&PropagatedStack::from_layers(layers).unwrap());
    (model, targets)
}

pub fn loss_of(model: &MqeModel<f64>, targets: &Targets<f64>, cfg: &LossConfig) -> f64 {
    let est: Vec<_> = (0..=targets.hops()).map(|l| model.forward(l).unwrap()).collect();
    nll_loss(&est, targets, cfg).unwrap()
}

/// Relative error `|a − b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub const FD_STEP: f64 = 1e-5;
/// Below this magnitude a coordinate is compared absolutely: central
/// differences carry rounding noise of order `ε·|loss|/step ≈ 1e-11`.
pub const REL_FLOOR: f64 = 1e-4;

/// Worst relative error between the analytic gradient and central
/// differences over every coordinate of every tensor.
pub fn gradient_check(model: &MqeModel<f64>, targets: &Targets<f64>, cfg: &LossConfig) -> f64 {
    let caches: Vec<_> = (0..=targets.hops()).map(|l| model.forward_cached(l).unwrap()).collect();
    let grads = backward(model, &caches, targets, cfg).unwrap();
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (t, g) in analytic.iter().enumerate() {
        for (k, &a) in g.iter().enumerate() {
            let orig = probe.tensors()[t][k];
            probe.tensors_mut()[t][k] = orig + FD_STEP;
            let up = loss_of(&probe, targets, cfg);
            probe.tensors_mut()[t][k] = orig - FD_STEP;
            let down = loss_of(&probe, targets, cfg);
            probe.tensors_mut()[t][k] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(a, numeric, REL_FLOOR));
        }
    }
    worst
}

pub fn dense_of(g: &SparseGraph) -> Array2<f64> {
    let rows = g.to_dense();
    Array2::from_shape_fn((g.n(), g.n()), |(i, j)| rows[i][j])
}

/// Configuration of the synthetic end-to-end run.
pub fn sbm_config(seed: u64, ablation: &str) -> ExperimentConfig {
    let mut m = ConfigMap::new();
    for (k, v) in [
        ("dataset", "sbm"),
        ("out", "unused"),
        ("noise_kind", "normal"),
        ("noise_alpha", "0.5"),
        ("noise_beta", "1.0"),
        ("ablation", ablation),
    ] {
        m.insert(k.into(), v.into());
    }
    m.insert("seed".into(), seed.to_string());
    ExperimentConfig::from_map(&m).unwrap()
}

/// Trains a tiny instance to convergence and returns `(σ̃, RMS residual)`
/// for every node and hop. The σ head is wide enough to interpolate.
pub fn converged_sigma_pairs(seed: u64) -> Vec<(f64, f64)> {
    use mqe_core::estimator::{train, AdamConfig, TrainConfig};
    let mut r = rng(500 + seed);
    let (n, d, hops) = (12, 6, 1);
    let layers = (0..=hops)
        .map(|_| FeatureSet::new(random_matrix(&mut r, n, d, 1.0)).unwrap())
        .collect();
    let targets = Targets::<f64>::from_stack(&PropagatedStack::from_layers(layers).unwrap());
    let dims = ModelDims { n, d, f: 2, h: 32, hops };
    let mut model = MqeModel::<f64>::init(dims, seed, 1e-3).unwrap();
    // A small step size lets Adam settle instead of hovering around the optimum.
    let cfg = TrainConfig {
        epochs: 20_000,
        adam: AdamConfig { lr: 1e-3, ..AdamConfig::default() },
        seed,
        ..TrainConfig::default()
    };
    train(&mut model, &targets, &cfg).unwrap();
    let mut out = Vec::new();
    for hop in 0..=hops {
        let est = model.forward(hop).unwrap();
        let t = targets.layer(hop);
        for i in 0..n {
            let s: f64 = (0..d).map(|j| (t[[i, j]] - est.mu[[i, j]]).powi(2)).sum();
            out.push((est.sigma[i], (s / d as f64).sqrt()));
        }
    }
    out
}
