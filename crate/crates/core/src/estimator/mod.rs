//! Multi-hop feature quality estimation.
//!
//! Every node owns a learnable meta representation `z_i`. For each hop
//! `ℓ = 0..=L` a pair of two-layer perceptrons maps `z_i` to the mean
//! `μ_i^(ℓ)` (a `d`-vector) and a scalar standard deviation `σ_i^(ℓ)` of that
//! hop's propagated features. Training minimizes the Gaussian negative
//! log-likelihood of the propagated stack jointly over all estimators and
//! `Z`; the trained `Z` is the node embedding.

mod adam;
mod loss;
mod model;
mod train;

pub use adam::{Adam, AdamConfig};
pub use loss::{backward, nll_loss, HopSelection, LogSigmaScale, LossConfig};
pub use model::{
    softplus, Gradients, HopCache, HopEstimate, HopEstimator, Mlp, ModelDims, MqeModel,
    DEFAULT_SIGMA_FLOOR,
};
pub use train::{train, Targets, TrainConfig, TrainOutcome};

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::Float;

/// Scalar type the model can be trained in (`f32` for runs, `f64` for
/// gradient checks).
pub trait Real:
    Float + LinalgScalar + ScalarOperand + Sum + Debug + Display + Send + Sync + 'static
{
    fn from_f64(v: f64) -> Self;
}

impl Real for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
}

/// Variants of the method evaluated in ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ablation {
    #[default]
    None,
    /// Propagate on the normalized input graph only.
    NoAug,
    /// Fit only the last hop.
    NoMh,
    /// Drop the `ln σ` term from the loss.
    NoReg,
}

impl Ablation {
    pub fn name(self) -> &'static str {
        match self {
            Ablation::None => "none",
            Ablation::NoAug => "no-aug",
            Ablation::NoMh => "no-mh",
            Ablation::NoReg => "no-reg",
        }
    }

    pub fn uses_augmentation(self) -> bool {
        self != Ablation::NoAug
    }

    /// Loss configuration for this variant, starting from `base`.
    pub fn loss_config(self, base: LossConfig) -> LossConfig {
        match self {
            Ablation::NoMh => LossConfig { hops: HopSelection::LastOnly, ..base },
            Ablation::NoReg => LossConfig { regularize: false, ..base },
            Ablation::None | Ablation::NoAug => base,
        }
    }
}

impl std::str::FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Ablation::None),
            "no-aug" => Ok(Ablation::NoAug),
            "no-mh" => Ok(Ablation::NoMh),
            "no-reg" => Ok(Ablation::NoReg),
            other => Err(format!("unknown ablation '{other}' (expected none, no-aug, no-mh, no-reg)")),
        }
    }
}
