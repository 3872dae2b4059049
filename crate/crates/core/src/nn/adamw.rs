//! AdamW with decoupled weight decay.

use super::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamW<T> {
    pub cfg: AdamWConfig,
    pub step: u64,
    pub m: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Real> AdamW<T> {
    pub fn new(cfg: AdamWConfig, n: usize) -> Self {
        Self {
            cfg,
            step: 0,
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
        }
    }

    /// One update. The decay `θ ← θ·(1 − lr·wd)` is applied to the parameter
    /// itself before the bias-corrected Adam step. Fails without touching
    /// anything if a gradient is not finite.
    pub fn update(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::Shape("optimizer state does not match parameter count".into()));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!("non-finite gradient at parameter {i}")));
        }
        let c = self.cfg;
        self.step += 1;
        let bc1 = 1.0 - c.beta1.powf(self.step as f64);
        let bc2 = 1.0 - c.beta2.powf(self.step as f64);
        let decay = 1.0 - c.lr * c.weight_decay;
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let g = g.f64();
            let mn = c.beta1 * m.f64() + (1.0 - c.beta1) * g;
            let vn = c.beta2 * v.f64() + (1.0 - c.beta2) * g * g;
            *m = T::of(mn);
            *v = T::of(vn);
            let step = c.lr * (mn / bc1) / ((vn / bc2).sqrt() + c.eps);
            *p = T::of(p.f64() * decay - step);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_zero_decay_is_identity() {
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut opt = AdamW::<f64>::new(cfg, 3);
        let mut p = vec![1.0, -2.0, 0.5];
        for _ in 0..5 {
            opt.update(&mut p, &[0.0; 3]).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_closed_form() {
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut opt = AdamW::<f64>::new(cfg, 1);
        let mut p = vec![0.0];
        opt.update(&mut p, &[1.0]).unwrap();
        assert!((p[0] - (-1e-3 / (1.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn decay_only_recurrence() {
        let cfg = AdamWConfig::default();
        let mut opt = AdamW::<f64>::new(cfg, 1);
        let mut p = vec![3.0];
        for _ in 0..50 {
            opt.update(&mut p, &[0.0]).unwrap();
        }
        let want = 3.0 * (1.0 - 1e-3 * 1e-4f64).powi(50);
        assert!((p[0] - want).abs() < 1e-14);
    }

    #[test]
    fn non_finite_gradient_fails_fast() {
        let mut opt = AdamW::<f32>::new(AdamWConfig::default(), 2);
        let mut p = vec![1.0f32, 1.0];
        assert!(opt.update(&mut p, &[0.1, f32::NAN]).is_err());
        assert_eq!(p, vec![1.0, 1.0]);
        assert_eq!(opt.step, 0);
    }
}
