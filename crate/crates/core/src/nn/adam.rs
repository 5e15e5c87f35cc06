use serde::{Deserialize, Serialize};

use super::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid optimizer settings {self:?}"
            )))
        }
    }
}

/// Adam moments for a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(config: AdamConfig, n_params: usize) -> Self {
        OptimizerState {
            config,
            step: 0,
            m: vec![T::zero(); n_params],
            v: vec![T::zero(); n_params],
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::shape(
                "optimizer parameters",
                self.m.len(),
                params.len(),
            ));
        }
        if grads.len() != self.m.len() {
            return Err(Error::shape(
                "optimizer gradients",
                self.m.len(),
                grads.len(),
            ));
        }
        self.step += 1;
        let c = &self.config;
        let k = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(k);
        let bc2 = 1.0 - c.beta2.powi(k);
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (one_b1, one_b2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
        let step_size = T::of(c.lr / bc1);
        let inv_sqrt_bc2 = T::of(1.0 / bc2.sqrt());
        let eps = T::of(c.eps);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = b1 * *m + one_b1 * g;
            *v = b2 * *v + one_b2 * g * g;
            *p -= step_size * *m / ((*v).sqrt() * inv_sqrt_bc2 + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut opt = OptimizerState::<f64>::new(AdamConfig::default(), 3);
        let mut p = vec![1.0, -2.0, 3.0];
        opt.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(opt.step, 1);
    }

    #[test]
    fn first_step_closed_form() {
        let cfg = AdamConfig::default();
        let mut opt = OptimizerState::<f64>::new(cfg, 3);
        let g = [0.5, -3.0, 1e-3];
        let mut p = vec![0.0; 3];
        opt.step(&mut p, &g).unwrap();
        for (pi, gi) in p.iter().zip(g) {
            let expect = -cfg.lr * gi / (gi.abs() + cfg.eps);
            assert!((pi - expect).abs() < 1e-15, "{pi} vs {expect}");
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut opt = OptimizerState::<f32>::new(AdamConfig::default(), 2);
        let mut p = vec![0.0; 3];
        assert!(matches!(
            opt.step(&mut p, &[0.0; 3]),
            Err(Error::Shape { .. })
        ));
        let mut p = vec![0.0; 2];
        assert!(matches!(
            opt.step(&mut p, &[0.0; 1]),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn restored_state_continues_identically() {
        let mut a = OptimizerState::<f32>::new(AdamConfig::default(), 2);
        let mut pa = vec![1.0f32, 2.0];
        a.step(&mut pa, &[0.3, -0.1]).unwrap();
        let bytes: Vec<u8> = {
            let mut out = Vec::new();
            for x in a.m.iter().chain(&a.v) {
                x.write_le(&mut out);
            }
            out
        };
        let vals: Vec<f32> = bytes.chunks(4).map(f32::read_le).collect();
        let mut b = OptimizerState {
            config: a.config,
            step: a.step,
            m: vals[..2].to_vec(),
            v: vals[2..].to_vec(),
        };
        let mut pb = pa.clone();
        for g in [[0.2, 0.4], [-1.0, 0.0]] {
            a.step(&mut pa, &g).unwrap();
            b.step(&mut pb, &g).unwrap();
        }
        assert_eq!(pa, pb);
        assert_eq!(a, b);
    }
}
