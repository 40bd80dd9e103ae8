//! Adam with global gradient-norm clipping, and streaming observation
//! normalisation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{l2_norm, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Gradients with a larger L2 norm are rescaled to this norm.
    pub max_grad_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 3e-4, beta1: 0.9, beta2: 0.999, eps: 1e-5, max_grad_norm: Some(0.5) }
    }
}

/// Minimises: each step moves against the given gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    m: Vec<T>,
    v: Vec<T>,
    t: u64,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig, n_params: usize) -> Self {
        Self { config, m: vec![T::zero(); n_params], v: vec![T::zero(); n_params], t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Clips `grad` in place to the configured norm and returns the norm
    /// before clipping.
    pub fn clip(&self, grad: &mut [T]) -> T {
        let norm = l2_norm(grad);
        if let Some(max) = self.config.max_grad_norm {
            let max = T::lit(max);
            if norm > max {
                let k = max / norm;
                grad.iter_mut().for_each(|g| *g *= k);
            }
        }
        norm
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::Shape { expected: self.m.len(), got: grad.len().min(params.len()) });
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient entry {i} is {}", grad[i])));
        }
        let mut g = grad.to_vec();
        self.clip(&mut g);
        self.t += 1;
        let c = &self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let bias1 = T::one() - b1.powi(self.t as i32);
        let bias2 = T::one() - b2.powi(self.t as i32);
        let (lr, eps) = (T::lit(c.lr), T::lit(c.eps));
        for i in 0..params.len() {
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * g[i];
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * g[i] * g[i];
            let m_hat = self.m[i] / bias1;
            let v_hat = self.v[i] / bias2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Welford running mean and variance per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningNorm<T> {
    count: u64,
    mean: Vec<T>,
    m2: Vec<T>,
}

impl<T: Real> RunningNorm<T> {
    pub fn new(dim: usize) -> Self {
        Self { count: 0, mean: vec![T::zero(); dim], m2: vec![T::zero(); dim] }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    /// Population standard deviation per coordinate.
    pub fn std(&self) -> Vec<T> {
        let n = T::lit(self.count.max(1) as f64);
        self.m2.iter().map(|&m| (m / n).sqrt()).collect()
    }

    pub fn update(&mut self, x: &[T]) -> Result<()> {
        if x.len() != self.mean.len() {
            return Err(Error::Shape { expected: self.mean.len(), got: x.len() });
        }
        self.count += 1;
        let n = T::lit(self.count as f64);
        for i in 0..x.len() {
            let delta = x[i] - self.mean[i];
            self.mean[i] += delta / n;
            self.m2[i] += delta * (x[i] - self.mean[i]);
        }
        Ok(())
    }

    pub fn normalize(&self, x: &[T]) -> Vec<T> {
        let floor = T::lit(1e-8);
        x.iter()
            .zip(&self.mean)
            .zip(self.std())
            .map(|((&xi, &m), s)| (xi - m) / s.max(floor))
            .collect()
    }

    /// Folds `x` into the statistics, then normalises it.
    pub fn observe(&mut self, x: &[T]) -> Result<Vec<T>> {
        self.update(x)?;
        Ok(self.normalize(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut adam = Adam::<f64>::new(AdamConfig::default(), 3);
        let mut p = vec![1.0, -2.0, 0.5];
        adam.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn norm_clip_rescales_to_the_limit() {
        let adam = Adam::<f64>::new(AdamConfig::default(), 2);
        let mut g = vec![3.0, 4.0];
        assert_eq!(adam.clip(&mut g), 5.0);
        assert!((l2_norm(&g) - 0.5).abs() < 1e-15);
        assert!((g[0] - 0.3).abs() < 1e-15 && (g[1] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn first_step_moves_by_the_learning_rate() {
        let mut adam = Adam::<f64>::new(AdamConfig::default(), 1);
        let mut p = vec![0.0];
        adam.step(&mut p, &[1.0]).unwrap();
        assert!((p[0].abs() - 3e-4).abs() < 1e-6);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut adam = Adam::<f64>::new(AdamConfig::default(), 1);
        let mut p = vec![0.0];
        assert!(matches!(adam.step(&mut p, &[f64::NAN]), Err(Error::NonFinite(_))));
        assert_eq!(adam.steps(), 0);
    }

    #[test]
    fn first_and_constant_observations_normalise_to_zero() {
        let mut n = RunningNorm::<f64>::new(2);
        assert_eq!(n.observe(&[3.0, -1.0]).unwrap(), vec![0.0, 0.0]);
        for _ in 0..10 {
            assert_eq!(n.observe(&[3.0, -1.0]).unwrap(), vec![0.0, 0.0]);
        }
    }

    #[test]
    fn alternating_stream_reaches_unit_scale() {
        let mut n = RunningNorm::<f64>::new(1);
        let mut last = [0.0; 2];
        for i in 0..10_000 {
            let x = if i % 2 == 0 { -1.0 } else { 1.0 };
            last[i % 2] = n.observe(&[x]).unwrap()[0];
        }
        assert!((n.std()[0] - 1.0).abs() < 1e-3);
        assert!((last[0] + 1.0).abs() < 1e-3 && (last[1] - 1.0).abs() < 1e-3);
    }
}
