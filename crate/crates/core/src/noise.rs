//! Synthetic feature noise and its ground truth.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{MqeError, Result};
use crate::propagation::FeatureSet;
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    /// Standard normal entries.
    Normal,
    /// Uniform entries on `[low, high)`; `[0, 1)` by default.
    Uniform,
}

impl std::str::FromStr for NoiseKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "normal" => Ok(NoiseKind::Normal),
            "uniform" => Ok(NoiseKind::Uniform),
            other => Err(format!("unknown noise kind '{other}' (expected normal or uniform)")),
        }
    }
}

impl NoiseKind {
    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::Normal => "normal",
            NoiseKind::Uniform => "uniform",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// Fraction of perturbed nodes, in `(0, 1]`.
    pub alpha: f64,
    /// Noise level.
    pub beta: f64,
    pub seed: u64,
    /// Support of uniform noise.
    pub uniform_range: (f64, f64),
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, alpha: f64, beta: f64, seed: u64) -> Self {
        NoiseSpec { kind, alpha, beta, seed, uniform_range: (0.0, 1.0) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(MqeError::Config(format!("noise alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(MqeError::Config(format!("noise beta must be >= 0, got {}", self.beta)));
        }
        let (lo, hi) = self.uniform_range;
        if self.kind == NoiseKind::Uniform && !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(MqeError::Config(format!("invalid uniform noise range [{lo}, {hi})")));
        }
        Ok(())
    }

    /// Number of perturbed nodes for a graph of `n` nodes.
    pub fn perturbed_count(&self, n: usize) -> usize {
        ((self.alpha * n as f64).round() as usize).min(n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseGroundTruth {
    pub perturbed: Vec<bool>,
    /// Per-node RMS deviation from the clean features; zero off the mask.
    pub intensity: Vec<f64>,
    pub clean: FeatureSet,
}

/// Adds `β·ψ_i` to a uniformly chosen `round(α·n)` subset of rows.
///
/// The subset is a seeded Fisher–Yates prefix; node `i` draws its noise from
/// its own stream, so its values do not depend on `n`.
pub fn inject(clean: &FeatureSet, spec: &NoiseSpec) -> Result<(FeatureSet, NoiseGroundTruth)> {
    spec.validate()?;
    let (n, d) = (clean.n(), clean.d());
    let count = spec.perturbed_count(n);

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = stream_rng(spec.seed, 0);
    for i in 0..count {
        let j = rng.random_range(i..n);
        order.swap(i, j);
    }
    let mut perturbed = vec![false; n];
    for &i in &order[..count] {
        perturbed[i] = true;
    }

    let (lo, hi) = spec.uniform_range;
    let mut noisy: Array2<f64> = clean.as_array().clone();
    for (i, mut row) in noisy.rows_mut().into_iter().enumerate() {
        if !perturbed[i] {
            continue;
        }
        let mut node_rng = stream_rng(spec.seed, i as u64 + 1);
        match spec.kind {
            NoiseKind::Normal => row.iter_mut().for_each(|v| {
                let psi: f64 = StandardNormal.sample(&mut node_rng);
                *v += spec.beta * psi;
            }),
            NoiseKind::Uniform => {
                let dist = Uniform::new(lo, hi).expect("validated range");
                row.iter_mut().for_each(|v| *v += spec.beta * dist.sample(&mut node_rng));
            }
        }
    }
    let noisy = FeatureSet::new(noisy)?;
    let intensity = intensity(clean, &noisy)?;
    debug_assert_eq!(noisy.d(), d);
    Ok((noisy, NoiseGroundTruth { perturbed, intensity, clean: clean.clone() }))
}

/// Per-node RMS deviation `√(Σ_j (x_ij − x̃_ij)² / d)`.
pub fn intensity(clean: &FeatureSet, noisy: &FeatureSet) -> Result<Vec<f64>> {
    if clean.n() != noisy.n() || clean.d() != noisy.d() {
        return Err(MqeError::Input(format!(
            "feature shapes differ: {}x{} vs {}x{}",
            clean.n(),
            clean.d(),
            noisy.n(),
            noisy.d()
        )));
    }
    let d = clean.d().max(1) as f64;
    Ok((0..clean.n())
        .map(|i| {
            let s: f64 = clean
                .row(i)
                .iter()
                .zip(noisy.row(i).iter())
                .map(|(a, b)| (b - a) * (b - a))
                .sum();
            (s / d).sqrt()
        })
        .collect())
}
