use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result};

use super::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgdConfig {
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub total_iters: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            base_lr: 0.01,
            momentum: 0.9,
            weight_decay: 1e-4,
            total_iters: 2000,
        }
    }
}

/// `base_lr · (1 − iter/total_iters)^0.9`.
pub fn poly_lr(base_lr: f64, iter: usize, total_iters: usize) -> f64 {
    base_lr * (1.0 - iter as f64 / total_iters as f64).powf(0.9)
}

/// Momentum SGD with weight decay folded into the gradient and a poly schedule.
#[derive(Debug, Clone)]
pub struct SgdState<T> {
    pub config: SgdConfig,
    velocity: Vec<Tensor<T>>,
}

impl<T: Real> SgdState<T> {
    pub fn new(config: SgdConfig, params: &[&Tensor<T>]) -> Self {
        Self {
            config,
            velocity: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    pub fn velocity(&self) -> &[Tensor<T>] {
        &self.velocity
    }

    /// Applies one update and returns the learning rate used.
    pub fn step(
        &mut self,
        params: &mut [&mut Tensor<T>],
        grads: &[&Tensor<T>],
        iter: usize,
    ) -> Result<f64> {
        const OP: &str = "sgd_poly_step";
        let cfg = self.config;
        if iter >= cfg.total_iters {
            return Err(Error::range(
                OP,
                format!(
                    "iteration {iter} is not below total_iters {}",
                    cfg.total_iters
                ),
            ));
        }
        if params.len() != self.velocity.len() || grads.len() != params.len() {
            return Err(Error::invalid(
                OP,
                format!(
                    "{} parameters, {} gradients, {} momentum buffers",
                    params.len(),
                    grads.len(),
                    self.velocity.len()
                ),
            ));
        }
        let lr = poly_lr(cfg.base_lr, iter, cfg.total_iters);
        let (lr_t, mu, wd) = (T::of(lr), T::of(cfg.momentum), T::of(cfg.weight_decay));
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            p.ensure_shape(OP, g.shape())?;
            p.ensure_shape(OP, v.shape())?;
            for ((pv, &gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                let d = gv + wd * *pv;
                *vv = mu * *vv + d;
                *pv -= lr_t * *vv;
            }
        }
        Ok(lr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poly_schedule_values() {
        assert_eq!(poly_lr(0.01, 0, 100), 0.01);
        // 0.01 · 0.5^0.9
        let half = poly_lr(0.01, 50, 100);
        assert!((half - 0.005_358_867_312_681_466).abs() < 1e-15, "{half}");
        assert!((half - 0.005359).abs() < 1e-6);
    }

    #[test]
    fn defaults_follow_fixed_hyperparameters() {
        let c = SgdConfig::default();
        assert_eq!(c.momentum, 0.9);
        assert_eq!(c.weight_decay, 0.0001);
    }

    #[test]
    fn momentum_update_by_hand() {
        let cfg = SgdConfig {
            base_lr: 0.1,
            momentum: 0.5,
            weight_decay: 0.0,
            total_iters: 10,
        };
        let mut p = Tensor::<f64>::from_f64(&[2], &[1.0, -1.0]).unwrap();
        let g = Tensor::<f64>::from_f64(&[2], &[1.0, 2.0]).unwrap();
        let mut st = SgdState::new(cfg, &[&p]);
        st.step(&mut [&mut p], &[&g], 0).unwrap();
        assert_eq!(p.data(), &[0.9, -1.2]);
        st.step(&mut [&mut p], &[&g], 5).unwrap();
        // v = 0.5·g + g = 1.5g, lr = 0.1·0.5^0.9
        let lr = poly_lr(0.1, 5, 10);
        assert!((p.data()[0] - (0.9 - lr * 1.5)).abs() < 1e-15);
        assert!(st.step(&mut [&mut p], &[&g], 10).is_err());
    }

    #[test]
    fn weight_decay_enters_before_momentum() {
        let cfg = SgdConfig {
            base_lr: 1.0,
            momentum: 0.9,
            weight_decay: 0.5,
            total_iters: 4,
        };
        let mut p = Tensor::<f64>::from_f64(&[1], &[2.0]).unwrap();
        let g = Tensor::<f64>::zeros(&[1]);
        let mut st = SgdState::new(cfg, &[&p]);
        st.step(&mut [&mut p], &[&g], 0).unwrap();
        assert_eq!(st.velocity()[0].data(), &[1.0]);
        assert_eq!(p.data(), &[1.0]);
    }
}
