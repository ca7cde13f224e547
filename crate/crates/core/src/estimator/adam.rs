use super::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-2, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias correction over a fixed list of flat tensors.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    cfg: AdamConfig,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    step: i32,
}

impl<T: Real> Adam<T> {
    pub fn new(cfg: AdamConfig, shapes: &[usize]) -> Self {
        Adam {
            cfg,
            m: shapes.iter().map(|&len| vec![T::zero(); len]).collect(),
            v: shapes.iter().map(|&len| vec![T::zero(); len]).collect(),
            step: 0,
        }
    }

    pub fn step(&mut self, params: Vec<&mut [T]>, grads: Vec<&[T]>) {
        assert_eq!(params.len(), self.m.len(), "parameter count changed");
        assert_eq!(grads.len(), self.m.len(), "gradient count mismatch");
        self.step += 1;
        let b1 = T::from_f64(self.cfg.beta1);
        let b2 = T::from_f64(self.cfg.beta2);
        let eps = T::from_f64(self.cfg.eps);
        let bias1 = 1.0 - self.cfg.beta1.powi(self.step);
        let bias2 = 1.0 - self.cfg.beta2.powi(self.step);
        let lr_t = T::from_f64(self.cfg.lr / bias1);
        let inv_sqrt_bias2 = T::from_f64(1.0 / bias2.sqrt());
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                *p = *p - lr_t * *m / ((*v).sqrt() * inv_sqrt_bias2 + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut adam = Adam::<f64>::new(AdamConfig::default(), &[2]);
        let mut p = vec![1.0, -1.0];
        adam.step(vec![&mut p], vec![&[3.0, -0.5]]);
        assert!((p[0] - (1.0 - 1e-2)).abs() < 1e-9);
        assert!((p[1] - (-1.0 + 1e-2)).abs() < 1e-9);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut adam = Adam::<f64>::new(AdamConfig { lr: 0.1, ..AdamConfig::default() }, &[1]);
        let mut x = vec![5.0];
        for _ in 0..2000 {
            let g = [2.0 * (x[0] - 2.0)];
            adam.step(vec![&mut x], vec![&g]);
        }
        assert!((x[0] - 2.0).abs() < 1e-3);
    }
}
