use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;

use super::splits::SplitPlan;
use super::stats::{mean, std_dev};
use crate::error::{MqeError, Result};
use crate::estimator::{Adam, AdamConfig};
use crate::graph::SparseGraph;
use crate::propagation::{propagate_stack, FeatureSet};
use crate::rng::{derive_seed, stream_rng, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Candidate L2 strengths, chosen by validation accuracy.
    pub l2_grid: Vec<f64>,
    /// Standardize columns with training-split statistics.
    pub standardize: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            epochs: 300,
            lr: 0.01,
            l2_grid: vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0],
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub runs: usize,
    /// Test accuracy of every run.
    pub accuracies: Vec<f64>,
    /// L2 strength selected in every run.
    pub chosen_l2: Vec<f64>,
}

/// Multinomial logistic regression with an L2 penalty on the weights.
#[derive(Debug, Clone)]
pub struct SoftmaxRegression {
    w: Array2<f64>,
    b: Array1<f64>,
    shift: Array1<f64>,
    scale: Array1<f64>,
}

fn softmax_rows(mut logits: Array2<f64>) -> Array2<f64> {
    for mut row in logits.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    logits
}

impl SoftmaxRegression {
    /// Full-batch Adam on mean cross-entropy plus `l2/2·‖W‖²`. Returns the
    /// model and the objective before every step.
    pub fn fit(
        x: ArrayView2<f64>,
        y: &[usize],
        classes: usize,
        l2: f64,
        cfg: &ProbeConfig,
        seed: u64,
    ) -> (Self, Vec<f64>) {
        let (m, f) = x.dim();
        let (shift, scale) = if cfg.standardize {
            let mu = x.mean_axis(Axis(0)).expect("nonempty training set");
            let sd = x.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-12 { s } else { 1.0 });
            (mu, sd)
        } else {
            (Array1::zeros(f), Array1::ones(f))
        };
        let xs = (&x - &shift) / &scale;
        let mut onehot = Array2::<f64>::zeros((m, classes));
        for (i, &c) in y.iter().enumerate() {
            onehot[[i, c]] = 1.0;
        }

        let mut rng = stream_rng(seed, 0);
        let mut w = Array2::from_shape_fn((f, classes), |_| rng.random_range(-0.01..0.01));
        let mut b = Array1::<f64>::zeros(classes);
        let mut adam = Adam::new(AdamConfig { lr: cfg.lr, ..AdamConfig::default() }, &[f * classes, classes]);
        let mut trace = Vec::with_capacity(cfg.epochs);
        let inv_m = 1.0 / m as f64;
        for _ in 0..cfg.epochs {
            let p = softmax_rows(xs.dot(&w) + &b);
            let ce: f64 = p
                .rows()
                .into_iter()
                .zip(y)
                .map(|(row, &c)| -row[c].max(1e-300).ln())
                .sum::<f64>()
                * inv_m;
            trace.push(ce + 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>());
            let g = (p - &onehot) * inv_m;
            let gw = xs.t().dot(&g) + &(&w * l2);
            let gb = g.sum_axis(Axis(0));
            adam.step(
                vec![w.as_slice_mut().unwrap(), b.as_slice_mut().unwrap()],
                vec![gw.as_slice().unwrap(), gb.as_slice().unwrap()],
            );
        }
        (SoftmaxRegression { w, b, shift, scale }, trace)
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Vec<usize> {
        let logits = ((&x - &self.shift) / &self.scale).dot(&self.w) + &self.b;
        logits
            .rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (c, &v)| if v > best.1 { (c, v) } else { best })
                    .0
            })
            .collect()
    }

    pub fn accuracy(&self, x: ArrayView2<f64>, y: &[usize]) -> f64 {
        if y.is_empty() {
            return 0.0;
        }
        let hits = self.predict(x).iter().zip(y).filter(|(p, t)| p == t).count();
        hits as f64 / y.len() as f64
    }
}

fn gather(x: ArrayView2<f64>, labels: &[usize], idx: &[usize]) -> (Array2<f64>, Vec<usize>) {
    (x.select(Axis(0), idx), idx.iter().map(|&i| labels[i]).collect())
}

/// Linear-probe node classification over `runs` runs.
///
/// Each run draws its splits from `plan`, fits one softmax regression per L2
/// strength on the training nodes, keeps the strength with the best
/// validation accuracy and reports its test accuracy.
pub fn probe(
    embeddings: ArrayView2<f64>,
    labels: &[usize],
    plan: &SplitPlan,
    runs: usize,
    seed: u64,
    cfg: &ProbeConfig,
) -> Result<ProbeResult> {
    let n = embeddings.nrows();
    if labels.len() != n {
        return Err(MqeError::Eval(format!("{} labels for {n} embeddings", labels.len())));
    }
    if runs == 0 || cfg.l2_grid.is_empty() {
        return Err(MqeError::Config("probe needs at least one run and one L2 strength".into()));
    }
    let classes = labels.iter().max().map_or(0, |&c| c + 1);
    let split_seed = derive_seed(seed, Stream::Splits);
    let init_seed = derive_seed(seed, Stream::Probe);

    let outcomes: Vec<Result<(f64, f64)>> = (0..runs)
        .into_par_iter()
        .map(|run| {
            let splits = plan.splits_for_run(n, split_seed, run as u64)?;
            let (xtr, ytr) = gather(embeddings, labels, &splits.train);
            let mut present = ytr.clone();
            present.sort_unstable();
            present.dedup();
            if present.len() < 2 {
                return Err(MqeError::Eval("training split contains a single class".into()));
            }
            let (xva, yva) = gather(embeddings, labels, &splits.val);
            let (xte, yte) = gather(embeddings, labels, &splits.test);
            let run_seed = init_seed.wrapping_add(run as u64);
            let mut best: Option<(f64, f64, SoftmaxRegression)> = None;
            for &l2 in &cfg.l2_grid {
                let (clf, _) = SoftmaxRegression::fit(xtr.view(), &ytr, classes, l2, cfg, run_seed);
                let score = if yva.is_empty() {
                    clf.accuracy(xtr.view(), &ytr)
                } else {
                    clf.accuracy(xva.view(), &yva)
                };
                if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
                    best = Some((score, l2, clf));
                }
            }
            let (_, l2, clf) = best.expect("nonempty grid");
            Ok((clf.accuracy(xte.view(), &yte), l2))
        })
        .collect();
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let (accuracies, chosen_l2): (Vec<f64>, Vec<f64>) = outcomes.into_iter().unzip();
    Ok(ProbeResult {
        accuracy_mean: mean(&accuracies),
        accuracy_std: std_dev(&accuracies),
        runs,
        accuracies,
        chosen_l2,
    })
}

/// Probes every layer of `propagate_stack(g_norm, x, max_hops)`.
#[allow(clippy::too_many_arguments)]
pub fn hop_sweep(
    g_norm: &SparseGraph,
    x: &FeatureSet,
    labels: &[usize],
    plan: &SplitPlan,
    max_hops: usize,
    runs: usize,
    seed: u64,
    cfg: &ProbeConfig,
) -> Result<Vec<ProbeResult>> {
    let stack = propagate_stack(g_norm, x, max_hops)?;
    stack
        .layers()
        .iter()
        .map(|layer| probe(layer.view(), labels, plan, runs, seed, cfg))
        .collect()
}

/// `hop,accuracy_mean,accuracy_std` rows for a sweep.
pub fn sweep_csv(results: &[ProbeResult]) -> String {
    let mut out = String::from("hop,accuracy_mean,accuracy_std\n");
    for (hop, r) in results.iter().enumerate() {
        out.push_str(&format!("{hop},{:.6},{:.6}\n", r.accuracy_mean, r.accuracy_std));
    }
    out
}
