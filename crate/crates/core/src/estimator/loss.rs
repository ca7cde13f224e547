//! Gaussian negative log-likelihood of the propagated stack and its
//! analytic gradient.
//!
//! For hop `ℓ` and node `i`, with residual `r = x̂_i^(ℓ) − μ_i^(ℓ)` and
//! `S = ‖r‖²`, the loss term is
//!
//! ```text
//! S / (2σ²) + κ · ln σ
//! ```
//!
//! where `κ = d` for the full per-dimension likelihood with a shared scalar σ
//! (whose minimizer is the RMS residual `√(S/d)`) or `κ = 1` for the single
//! log term. Constant terms are dropped.

use ndarray::{Array1, Array2, Axis, Zip};

use super::model::{sigmoid, Gradients, HopCache, HopEstimate, MqeModel};
use super::Real;
use crate::error::{MqeError, Result};
use crate::propagation::PropagatedStack;

/// Which hops contribute to the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HopSelection {
    #[default]
    All,
    LastOnly,
}

/// Multiplier of the `ln σ` term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogSigmaScale {
    /// `d · ln σ`: exact likelihood of `d` dimensions sharing one σ.
    #[default]
    PerDimension,
    /// A single `ln σ` per node and hop.
    Single,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossConfig {
    pub hops: HopSelection,
    /// Include the `ln σ` term; without it σ grows without bound.
    pub regularize: bool,
    pub log_sigma: LogSigmaScale,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            hops: HopSelection::All,
            regularize: true,
            log_sigma: LogSigmaScale::PerDimension,
        }
    }
}

impl LossConfig {
    pub fn active_hops(&self, max_hop: usize) -> Vec<usize> {
        match self.hops {
            HopSelection::All => (0..=max_hop).collect(),
            HopSelection::LastOnly => vec![max_hop],
        }
    }

    fn log_weight(&self, d: usize) -> f64 {
        match (self.regularize, self.log_sigma) {
            (false, _) => 0.0,
            (true, LogSigmaScale::PerDimension) => d as f64,
            (true, LogSigmaScale::Single) => 1.0,
        }
    }
}

/// Propagated features converted to the model's scalar type.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets<T> {
    layers: Vec<Array2<T>>,
}

impl<T: Real> Targets<T> {
    pub fn from_stack(stack: &PropagatedStack) -> Self {
        Targets {
            layers: stack
                .layers()
                .iter()
                .map(|l| l.as_array().mapv(T::from_f64))
                .collect(),
        }
    }

    pub fn hops(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn layer(&self, hop: usize) -> &Array2<T> {
        &self.layers[hop]
    }

    pub fn n(&self) -> usize {
        self.layers[0].nrows()
    }

    pub fn d(&self) -> usize {
        self.layers[0].ncols()
    }
}

/// Per-node squared residual norms, accumulated in double precision.
fn squared_residuals<T: Real>(target: &Array2<T>, mu: &Array2<T>) -> Array1<f64> {
    Zip::from(target.rows())
        .and(mu.rows())
        .map_collect(|x, m| {
            x.iter()
                .zip(m.iter())
                .map(|(&a, &b)| {
                    let r = a.to_f64().unwrap() - b.to_f64().unwrap();
                    r * r
                })
                .sum()
        })
}

/// Loss contribution of a single hop.
pub(crate) fn hop_loss<T: Real>(est: &HopEstimate<T>, target: &Array2<T>, cfg: &LossConfig) -> f64 {
    let kappa = cfg.log_weight(target.ncols());
    let sq = squared_residuals(target, &est.mu);
    sq.iter()
        .zip(est.sigma.iter())
        .map(|(&s, &sigma)| {
            let sigma = sigma.to_f64().unwrap();
            s / (2.0 * sigma * sigma) + kappa * sigma.ln()
        })
        .sum()
}

fn check_shapes<T: Real>(count: usize, targets: &Targets<T>) -> Result<()> {
    if count != targets.hops() + 1 {
        return Err(MqeError::Input(format!(
            "{count} hop estimates for a stack of {} layers",
            targets.hops() + 1
        )));
    }
    Ok(())
}

/// Total loss over the active hops. `estimates[ℓ]` must be the estimate of
/// hop `ℓ`, for `ℓ = 0..=L`.
pub fn nll_loss<T: Real>(
    estimates: &[HopEstimate<T>],
    targets: &Targets<T>,
    cfg: &LossConfig,
) -> Result<f64> {
    check_shapes(estimates.len(), targets)?;
    let mut total = 0.0;
    for hop in cfg.active_hops(targets.hops()) {
        let est = &estimates[hop];
        let target = targets.layer(hop);
        if est.mu.dim() != target.dim() || est.sigma.len() != target.nrows() {
            return Err(MqeError::Input(format!("hop {hop} estimate shape does not match targets")));
        }
        total += hop_loss(est, target, cfg);
    }
    if !total.is_finite() {
        return Err(MqeError::Numerical { epoch: 0, msg: format!("loss is {total}") });
    }
    Ok(total)
}

/// Adds the gradient of one hop's loss term to `grads`.
pub(crate) fn accumulate_hop_grad<T: Real>(
    model: &MqeModel<T>,
    hop: usize,
    cache: &HopCache<T>,
    target: &Array2<T>,
    cfg: &LossConfig,
    grads: &mut Gradients<T>,
) {
    let est = &model.hops[hop];
    let out = &mut grads.hops[hop];
    let kappa = T::from_f64(cfg.log_weight(target.ncols()));
    let sigma = &cache.estimate.sigma;

    // ∂/∂μ = (μ − x) / σ²
    let mut g_mu = &cache.estimate.mu - target;
    let mut sq = Array1::<T>::zeros(sigma.len());
    for ((mut row, s), &sig) in g_mu.rows_mut().into_iter().zip(sq.iter_mut()).zip(sigma) {
        *s = row.iter().map(|&v| v * v).sum();
        let inv = T::one() / (sig * sig);
        row.mapv_inplace(|v| v * inv);
    }
    // ∂/∂σ = −S/σ³ + κ/σ, then through softplus.
    let g_logit = Zip::from(&sq)
        .and(sigma)
        .and(&cache.scale_logit)
        .map_collect(|&s, &sig, &logit| (-s / (sig * sig * sig) + kappa / sig) * sigmoid(logit));

    let relu_back = |d_hidden: Array2<T>, pre: &Array2<T>| {
        let mut d = d_hidden;
        Zip::from(&mut d).and(pre).for_each(|g, &p| {
            if p <= T::zero() {
                *g = T::zero();
            }
        });
        d
    };

    // Mean network.
    out.mean.w2 = &out.mean.w2 + &cache.mean_hidden.t().dot(&g_mu);
    out.mean.b2 = &out.mean.b2 + &g_mu.sum_axis(Axis(0));
    let d_pre = relu_back(g_mu.dot(&est.mean.w2.t()), &cache.mean_pre);
    out.mean.w1 = &out.mean.w1 + &model.z.t().dot(&d_pre);
    out.mean.b1 = &out.mean.b1 + &d_pre.sum_axis(Axis(0));
    grads.z = &grads.z + &d_pre.dot(&est.mean.w1.t());

    // Scale network.
    let g_col = g_logit.view().insert_axis(Axis(1));
    out.scale.w2 = &out.scale.w2 + &cache.scale_hidden.t().dot(&g_col);
    out.scale.b2[0] = out.scale.b2[0] + g_logit.sum();
    let d_hidden = g_col.dot(&est.scale.w2.t());
    let d_pre = relu_back(d_hidden, &cache.scale_pre);
    out.scale.w1 = &out.scale.w1 + &model.z.t().dot(&d_pre);
    out.scale.b1 = &out.scale.b1 + &d_pre.sum_axis(Axis(0));
    grads.z = &grads.z + &d_pre.dot(&est.scale.w1.t());
}

/// Analytic gradient of [`nll_loss`] with respect to every estimator
/// parameter and `Z`. `caches[ℓ]` must come from `model.forward_cached(ℓ)`.
pub fn backward<T: Real>(
    model: &MqeModel<T>,
    caches: &[HopCache<T>],
    targets: &Targets<T>,
    cfg: &LossConfig,
) -> Result<Gradients<T>> {
    check_shapes(caches.len(), targets)?;
    let dims = model.dims();
    if dims.n != targets.n() || dims.d != targets.d() || dims.hops != targets.hops() {
        return Err(MqeError::Input("model and targets disagree in shape".into()));
    }
    let mut grads = Gradients::zeros(&dims);
    for hop in cfg.active_hops(targets.hops()) {
        accumulate_hop_grad(model, hop, &caches[hop], targets.layer(hop), cfg, &mut grads);
    }
    Ok(grads)
}
