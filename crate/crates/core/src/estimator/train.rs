use super::adam::{Adam, AdamConfig};
use super::loss::{accumulate_hop_grad, hop_loss, LossConfig};
use super::model::{Gradients, MqeModel, DEFAULT_SIGMA_FLOOR};
use super::Real;
use crate::error::{MqeError, Result};

pub use super::loss::Targets;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub adam: AdamConfig,
    /// Seed for model initialization.
    pub seed: u64,
    pub sigma_floor: f64,
    pub loss: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1000,
            adam: AdamConfig::default(),
            seed: 0,
            sigma_floor: DEFAULT_SIGMA_FLOOR,
            loss: LossConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.adam.lr > 0.0 && self.adam.lr.is_finite()) {
            return Err(MqeError::Config(format!("learning rate must be positive, got {}", self.adam.lr)));
        }
        if self.sigma_floor.is_nan() || self.sigma_floor <= 0.0 {
            return Err(MqeError::Config(format!("sigma floor must be positive, got {}", self.sigma_floor)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainOutcome {
    /// Loss at the start of every epoch, before its update.
    pub loss_trace: Vec<f64>,
}

/// Full-batch Adam on all estimators and `Z` jointly.
pub fn train<T: Real>(
    model: &mut MqeModel<T>,
    targets: &Targets<T>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let dims = model.dims();
    if dims.n != targets.n() || dims.d != targets.d() || dims.hops != targets.hops() {
        return Err(MqeError::Input(format!(
            "model (n={}, d={}, L={}) does not match targets (n={}, d={}, L={})",
            dims.n,
            dims.d,
            dims.hops,
            targets.n(),
            targets.d(),
            targets.hops()
        )));
    }
    let shapes: Vec<usize> = model.tensors().iter().map(|t| t.len()).collect();
    let mut adam = Adam::new(cfg.adam, &shapes);
    let active = cfg.loss.active_hops(dims.hops);
    let mut trace = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        let epoch = model.epochs_trained;
        let mut grads = Gradients::zeros(&dims);
        let mut loss = 0.0;
        for &hop in &active {
            let cache = model.forward_cached(hop)?;
            loss += hop_loss(&cache.estimate, targets.layer(hop), &cfg.loss);
            accumulate_hop_grad(model, hop, &cache, targets.layer(hop), &cfg.loss, &mut grads);
        }
        if !loss.is_finite() {
            return Err(MqeError::Numerical { epoch, msg: format!("loss is {loss}") });
        }
        trace.push(loss);
        adam.step(model.tensors_mut(), grads.tensors());
        model.epochs_trained += 1;
    }
    Ok(TrainOutcome { loss_trace: trace })
}
