use std::io::{Read, Write};

use ndarray::{Array1, Array2, Axis};
use rand::distr::{Distribution, Uniform};
use rand::Rng;

use super::Real;
use crate::error::{MqeError, Result};
use crate::rng::stream_rng;

/// Default lower bound added to every estimated standard deviation.
pub const DEFAULT_SIGMA_FLOOR: f64 = 1e-3;

const MODEL_MAGIC: &[u8; 4] = b"MQEM";
const MODEL_VERSION: u32 = 1;

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus<T: Real>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    /// Nodes.
    pub n: usize,
    /// Feature dimension of the targets.
    pub d: usize,
    /// Meta-representation (embedding) dimension.
    pub f: usize,
    /// Hidden width of every estimator.
    pub h: usize,
    /// Maximum hop `L`; the model holds `L + 1` estimator pairs.
    pub hops: usize,
}

/// Two-layer perceptron `relu(x W1 + b1) W2 + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub w1: Array2<T>,
    pub b1: Array1<T>,
    pub w2: Array2<T>,
    pub b2: Array1<T>,
}

impl<T: Real> Mlp<T> {
    fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Mlp {
            w1: Array2::zeros((input, hidden)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((hidden, output)),
            b2: Array1::zeros(output),
        }
    }

    fn random<R: Rng>(rng: &mut R, input: usize, hidden: usize, output: usize) -> Self {
        let mut mlp = Self::zeros(input, hidden, output);
        fill_uniform(&mut mlp.w1, input, rng);
        fill_uniform(&mut mlp.w2, hidden, rng);
        mlp
    }

    /// Pre-activation and rectified hidden layer.
    fn hidden(&self, z: &Array2<T>) -> (Array2<T>, Array2<T>) {
        let pre = z.dot(&self.w1) + &self.b1;
        let act = pre.mapv(|v| v.max(T::zero()));
        (pre, act)
    }

    fn slices_mut(&mut self) -> [&mut [T]; 4] {
        [
            self.w1.as_slice_mut().expect("standard layout"),
            self.b1.as_slice_mut().expect("standard layout"),
            self.w2.as_slice_mut().expect("standard layout"),
            self.b2.as_slice_mut().expect("standard layout"),
        ]
    }

    fn slices(&self) -> [&[T]; 4] {
        [
            self.w1.as_slice().expect("standard layout"),
            self.b1.as_slice().expect("standard layout"),
            self.w2.as_slice().expect("standard layout"),
            self.b2.as_slice().expect("standard layout"),
        ]
    }
}

/// Mean and scale estimators for one hop.
#[derive(Debug, Clone, PartialEq)]
pub struct HopEstimator<T> {
    /// `z → μ`, output dimension `d`.
    pub mean: Mlp<T>,
    /// `z → σ` pre-activation, output dimension 1.
    pub scale: Mlp<T>,
}

impl<T: Real> HopEstimator<T> {
    fn zeros(dims: &ModelDims) -> Self {
        HopEstimator {
            mean: Mlp::zeros(dims.f, dims.h, dims.d),
            scale: Mlp::zeros(dims.f, dims.h, 1),
        }
    }
}

fn fill_uniform<T: Real, R: Rng>(a: &mut Array2<T>, fan_in: usize, rng: &mut R) {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    a.iter_mut().for_each(|v| *v = T::from_f64(dist.sample(rng)));
}

/// Estimated Gaussian parameters of one hop for every node.
#[derive(Debug, Clone, PartialEq)]
pub struct HopEstimate<T> {
    /// `n × d` means.
    pub mu: Array2<T>,
    /// Per-node standard deviation, each `>= σ_min`.
    pub sigma: Array1<T>,
}

/// Forward intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct HopCache<T> {
    pub mean_pre: Array2<T>,
    pub mean_hidden: Array2<T>,
    pub scale_pre: Array2<T>,
    pub scale_hidden: Array2<T>,
    /// Softplus argument per node.
    pub scale_logit: Array1<T>,
    pub estimate: HopEstimate<T>,
}

/// Meta representations plus one estimator pair per hop.
#[derive(Debug, Clone, PartialEq)]
pub struct MqeModel<T> {
    pub z: Array2<T>,
    pub hops: Vec<HopEstimator<T>>,
    pub sigma_floor: T,
    /// Completed optimizer epochs; used to label numerical failures.
    pub epochs_trained: usize,
}

/// Gradient of the loss, shaped like the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub z: Array2<T>,
    pub hops: Vec<HopEstimator<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros(dims: &ModelDims) -> Self {
        Gradients {
            z: Array2::zeros((dims.n, dims.f)),
            hops: (0..=dims.hops).map(|_| HopEstimator::zeros(dims)).collect(),
        }
    }

    /// Flat views in the same order as [`MqeModel::tensors_mut`].
    pub fn tensors(&self) -> Vec<&[T]> {
        let mut out = vec![self.z.as_slice().expect("standard layout")];
        for hop in &self.hops {
            out.extend(hop.mean.slices());
            out.extend(hop.scale.slices());
        }
        out
    }
}

impl<T: Real> MqeModel<T> {
    /// Random model: `Z` and all weight matrices uniform on
    /// `±1/√fan_in` (fan-in `f` for `Z`), all biases zero.
    pub fn init(dims: ModelDims, seed: u64, sigma_floor: f64) -> Result<Self> {
        if dims.f == 0 || dims.h == 0 || dims.d == 0 {
            return Err(MqeError::Config(format!(
                "model dimensions must be positive (f = {}, h = {}, d = {})",
                dims.f, dims.h, dims.d
            )));
        }
        if !(sigma_floor > 0.0 && sigma_floor.is_finite()) {
            return Err(MqeError::Config(format!("sigma floor must be positive, got {sigma_floor}")));
        }
        let mut rng = stream_rng(seed, 0);
        let mut z = Array2::zeros((dims.n, dims.f));
        fill_uniform(&mut z, dims.f, &mut rng);
        let hops = (0..=dims.hops)
            .map(|_| HopEstimator {
                mean: Mlp::random(&mut rng, dims.f, dims.h, dims.d),
                scale: Mlp::random(&mut rng, dims.f, dims.h, 1),
            })
            .collect();
        Ok(MqeModel {
            z,
            hops,
            sigma_floor: T::from_f64(sigma_floor),
            epochs_trained: 0,
        })
    }

    /// Model with every parameter and `Z` set to zero.
    pub fn zeros(dims: ModelDims, sigma_floor: f64) -> Self {
        MqeModel {
            z: Array2::zeros((dims.n, dims.f)),
            hops: (0..=dims.hops).map(|_| HopEstimator::zeros(&dims)).collect(),
            sigma_floor: T::from_f64(sigma_floor),
            epochs_trained: 0,
        }
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            n: self.z.nrows(),
            f: self.z.ncols(),
            h: self.hops[0].mean.w1.ncols(),
            d: self.hops[0].mean.w2.ncols(),
            hops: self.hops.len() - 1,
        }
    }

    /// The learned node embeddings.
    pub fn embeddings(&self) -> &Array2<T> {
        &self.z
    }

    /// Flat mutable views of `Z` followed by every hop's
    /// `(mean w1, b1, w2, b2, scale w1, b1, w2, b2)`.
    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = vec![self.z.as_slice_mut().expect("standard layout")];
        for hop in &mut self.hops {
            out.extend(hop.mean.slices_mut());
            out.extend(hop.scale.slices_mut());
        }
        out
    }

    pub fn tensors(&self) -> Vec<&[T]> {
        let mut out = vec![self.z.as_slice().expect("standard layout")];
        for hop in &self.hops {
            out.extend(hop.mean.slices());
            out.extend(hop.scale.slices());
        }
        out
    }

    fn check_finite(&self, hop: usize) -> Result<()> {
        let est = &self.hops[hop];
        let finite = self.z.iter().all(|v| v.is_finite())
            && est.mean.slices().iter().chain(est.scale.slices().iter()).all(|t| t.iter().all(|v| v.is_finite()));
        if finite {
            Ok(())
        } else {
            Err(MqeError::Numerical {
                epoch: self.epochs_trained,
                msg: format!("non-finite parameter in hop {hop} estimator"),
            })
        }
    }

    /// Forward pass for `hop`, keeping the intermediates.
    pub fn forward_cached(&self, hop: usize) -> Result<HopCache<T>> {
        if hop >= self.hops.len() {
            return Err(MqeError::Input(format!(
                "hop {hop} out of range (model has hops 0..={})",
                self.hops.len() - 1
            )));
        }
        self.check_finite(hop)?;
        let est = &self.hops[hop];
        let (mean_pre, mean_hidden) = est.mean.hidden(&self.z);
        let mu = mean_hidden.dot(&est.mean.w2) + &est.mean.b2;
        let (scale_pre, scale_hidden) = est.scale.hidden(&self.z);
        let scale_logit = scale_hidden.dot(&est.scale.w2).index_axis_move(Axis(1), 0) + est.scale.b2[0];
        let floor = self.sigma_floor;
        let sigma = scale_logit.mapv(|s| softplus(s) + floor);
        Ok(HopCache {
            mean_pre,
            mean_hidden,
            scale_pre,
            scale_hidden,
            scale_logit,
            estimate: HopEstimate { mu, sigma },
        })
    }

    /// Estimated mean and standard deviation of hop `hop` for all nodes.
    pub fn forward(&self, hop: usize) -> Result<HopEstimate<T>> {
        self.forward_cached(hop).map(|c| c.estimate)
    }

    pub fn cast<U: Real>(&self) -> MqeModel<U> {
        let c2 = |a: &Array2<T>| a.mapv(|v| U::from_f64(v.to_f64().unwrap()));
        let c1 = |a: &Array1<T>| a.mapv(|v| U::from_f64(v.to_f64().unwrap()));
        let mlp = |m: &Mlp<T>| Mlp { w1: c2(&m.w1), b1: c1(&m.b1), w2: c2(&m.w2), b2: c1(&m.b2) };
        MqeModel {
            z: c2(&self.z),
            hops: self
                .hops
                .iter()
                .map(|h| HopEstimator { mean: mlp(&h.mean), scale: mlp(&h.scale) })
                .collect(),
            sigma_floor: U::from_f64(self.sigma_floor.to_f64().unwrap()),
            epochs_trained: self.epochs_trained,
        }
    }

    /// Binary model file: magic, version, dims, epochs, σ floor, then every
    /// tensor as little-endian f32 in [`MqeModel::tensors`] order.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let dims = self.dims();
        w.write_all(MODEL_MAGIC)?;
        w.write_all(&MODEL_VERSION.to_le_bytes())?;
        for v in [dims.n, dims.d, dims.f, dims.h, dims.hops, self.epochs_trained] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        w.write_all(&self.sigma_floor.to_f64().unwrap().to_le_bytes())?;
        for t in self.tensors() {
            for v in t {
                w.write_all(&v.to_f32().unwrap().to_le_bytes())?;
            }
        }
        w.flush()
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let io = |e: std::io::Error| MqeError::Data(format!("model file: {e}"));
        let mut head = [0u8; 8];
        r.read_exact(&mut head).map_err(io)?;
        if &head[..4] != MODEL_MAGIC {
            return Err(MqeError::Data("model file: bad magic".into()));
        }
        let version = u32::from_le_bytes(head[4..].try_into().unwrap());
        if version != MODEL_VERSION {
            return Err(MqeError::Data(format!("model file: unsupported version {version}")));
        }
        let mut fields = [0usize; 6];
        let mut buf8 = [0u8; 8];
        for f in fields.iter_mut() {
            r.read_exact(&mut buf8).map_err(io)?;
            *f = u64::from_le_bytes(buf8) as usize;
        }
        r.read_exact(&mut buf8).map_err(io)?;
        let floor = f64::from_le_bytes(buf8);
        let [n, d, f, h, hops, epochs] = fields;
        let mut model = Self::zeros(ModelDims { n, d, f, h, hops }, floor);
        model.epochs_trained = epochs;
        let mut buf4 = [0u8; 4];
        for t in model.tensors_mut() {
            for v in t.iter_mut() {
                r.read_exact(&mut buf4).map_err(io)?;
                *v = T::from_f64(f32::from_le_bytes(buf4) as f64);
            }
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn dims(n: usize, d: usize, f: usize, h: usize, hops: usize) -> ModelDims {
        ModelDims { n, d, f, h, hops }
    }

    #[test]
    fn init_is_deterministic() {
        let a = MqeModel::<f32>::init(dims(6, 5, 3, 4, 2), 42, 1e-3).unwrap();
        let b = MqeModel::<f32>::init(dims(6, 5, 3, 4, 2), 42, 1e-3).unwrap();
        assert_eq!(a, b);
        let c = MqeModel::<f32>::init(dims(6, 5, 3, 4, 2), 43, 1e-3).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn minimal_shape() {
        let m = MqeModel::<f64>::init(dims(1, 1, 1, 1, 0), 0, 1e-3).unwrap();
        assert_eq!(m.z.ncols(), 1);
        assert_eq!(m.hops.len(), 1);
        // Z plus w1, b1, w2, b2 for each of the two networks.
        assert_eq!(m.tensors().len(), 1 + 8);
        assert_eq!(m.dims(), dims(1, 1, 1, 1, 0));
    }

    #[test]
    fn init_respects_fan_in_bounds_and_zero_biases() {
        let (f, h) = (3usize, 7usize);
        let m = MqeModel::<f64>::init(dims(10, 4, f, h, 3), 9, 1e-3).unwrap();
        let bf = 1.0 / (f as f64).sqrt();
        let bh = 1.0 / (h as f64).sqrt();
        assert!(m.z.iter().all(|v| v.abs() <= bf));
        for hop in &m.hops {
            for mlp in [&hop.mean, &hop.scale] {
                assert!(mlp.w1.iter().all(|v| v.abs() <= bf));
                assert!(mlp.w2.iter().all(|v| v.abs() <= bh));
                assert!(mlp.b1.iter().chain(mlp.b2.iter()).all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn init_rejects_zero_dims() {
        assert!(MqeModel::<f32>::init(dims(3, 2, 0, 2, 1), 0, 1e-3).is_err());
    }

    #[test]
    fn zero_parameters_give_zero_mean_and_ln2_sigma() {
        let m = MqeModel::<f64>::zeros(dims(4, 3, 2, 5, 1), 1e-3);
        let est = m.forward(1).unwrap();
        assert!(est.mu.iter().all(|&v| v == 0.0));
        for &s in &est.sigma {
            assert_abs_diff_eq!(s, 2f64.ln() + 1e-3, epsilon = 1e-15);
        }
    }

    #[test]
    fn hand_computed_mean() {
        let mut m = MqeModel::<f64>::zeros(dims(1, 1, 1, 1, 0), 1e-3);
        m.z = array![[1.5]];
        m.hops[0].mean.w1 = array![[1.0]];
        m.hops[0].mean.w2 = array![[2.0]];
        m.hops[0].mean.b2 = array![0.5];
        assert_abs_diff_eq!(m.forward(0).unwrap().mu[[0, 0]], 3.5, epsilon = 1e-15);
    }

    #[test]
    fn saturated_scale_hits_floor() {
        let mut m = MqeModel::<f64>::zeros(dims(2, 1, 1, 1, 0), 1e-3);
        m.hops[0].scale.b2 = array![-1000.0];
        for &s in &m.forward(0).unwrap().sigma {
            assert_abs_diff_eq!(s, 1e-3, epsilon = 1e-12);
        }
        assert_eq!(softplus(-1000.0f64), 0.0);
        assert_abs_diff_eq!(softplus(1000.0f64), 1000.0);
    }

    #[test]
    fn non_finite_parameter_is_a_numerical_error() {
        let mut m = MqeModel::<f64>::zeros(dims(2, 1, 1, 1, 1), 1e-3);
        m.epochs_trained = 17;
        m.hops[1].mean.w2[[0, 0]] = f64::NAN;
        assert!(m.forward(0).is_ok());
        match m.forward(1) {
            Err(MqeError::Numerical { epoch, .. }) => assert_eq!(epoch, 17),
            other => panic!("expected numerical error, got {other:?}"),
        }
        assert!(matches!(m.forward(2), Err(MqeError::Input(_))));
    }

    #[test]
    fn sigma_is_positive_for_random_models() {
        for seed in 0..5 {
            let m = MqeModel::<f32>::init(dims(20, 6, 4, 8, 3), seed, 1e-3).unwrap();
            for hop in 0..=3 {
                assert!(m.forward(hop).unwrap().sigma.iter().all(|&s| s >= 1e-3));
            }
        }
    }

    #[test]
    fn model_file_round_trip() {
        let m = MqeModel::<f32>::init(dims(5, 4, 3, 2, 2), 3, 1e-3).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let back = MqeModel::<f32>::read_from(&buf[..]).unwrap();
        assert_eq!(back, m);
        assert!(MqeModel::<f32>::read_from(&buf[..10]).is_err());
    }
}
