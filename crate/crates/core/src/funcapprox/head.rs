//! Output heads: a network plus the distribution (or value) read off its
//! outputs. Gaussian heads append a state-independent `log_std` vector after
//! the network parameters.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::network::{Forward, Network, Obs};
use crate::error::{Error, Result};
use crate::scalar::{sigmoid, softmax, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Output {
    /// Softmax over `n` logits.
    Categorical { n: usize },
    /// Sigmoid of one logit; the outcome `true` has probability `sigmoid(z)`.
    Bernoulli,
    /// Diagonal Gaussian; the mean is the network output, optionally
    /// squashed by `tanh`.
    Gaussian { action_dim: usize, tanh_mean: bool },
    /// `n` linear value outputs.
    Value { n: usize },
}

impl Output {
    fn network_outputs(self) -> usize {
        match self {
            Output::Categorical { n } | Output::Value { n } => n,
            Output::Bernoulli => 1,
            Output::Gaussian { action_dim, .. } => action_dim,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome<'a, T> {
    Index(usize),
    Bool(bool),
    Continuous(&'a [T]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub network: Network,
    pub output: Output,
}

fn zero_prob(what: &str) -> Error {
    Error::ZeroProbability(format!("{what} outcome has zero probability"))
}

impl Head {
    pub fn new(network: Network, output: Output) -> Result<Self> {
        if network.n_outputs() != output.network_outputs() {
            return Err(Error::Shape { expected: output.network_outputs(), got: network.n_outputs() });
        }
        Ok(Self { network, output })
    }

    pub fn n_params(&self) -> usize {
        let extra = match self.output {
            Output::Gaussian { action_dim, .. } => action_dim,
            _ => 0,
        };
        self.network.n_params() + extra
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.output, Output::Categorical { .. } | Output::Bernoulli)
    }

    /// Policy heads get a small output layer so initial distributions are
    /// near uniform; `log_std` starts at 0.
    pub fn init<T: Real, R: Rng + ?Sized>(&self, rng: &mut R, params: &mut [T]) {
        let scale = match self.output {
            Output::Value { .. } => 1.0,
            _ => 0.01,
        };
        let n = self.network.n_params();
        self.network.init(rng, &mut params[..n], scale);
        params[n..].iter_mut().for_each(|p| *p = T::zero());
    }

    fn split<'p, T>(&self, params: &'p [T]) -> Result<(&'p [T], &'p [T])> {
        if params.len() != self.n_params() {
            return Err(Error::Shape { expected: self.n_params(), got: params.len() });
        }
        Ok(params.split_at(self.network.n_params()))
    }

    /// Raw network outputs (logits, mean or values).
    pub fn forward<T: Real>(&self, params: &[T], obs: Obs<'_, T>) -> Result<Forward<T>> {
        let (net, _) = self.split(params)?;
        self.network.forward(net, obs)
    }

    /// Accumulates `d_raw^T * d raw / d params` into the head's gradient
    /// slice.
    pub fn backward<T: Real>(&self, params: &[T], fwd: &Forward<T>, d_raw: &[T], grad: &mut [T]) -> Result<()> {
        let (net, _) = self.split(params)?;
        let n = self.network.n_params();
        self.network.backward(net, fwd, d_raw, &mut grad[..n])
    }

    pub fn probs<T: Real>(&self, params: &[T], obs: Obs<'_, T>) -> Result<Vec<T>> {
        let raw = self.forward(params, obs)?.output;
        match self.output {
            Output::Categorical { .. } => Ok(softmax(&raw)),
            Output::Bernoulli => {
                let b = sigmoid(raw[0]);
                Ok(vec![T::one() - b, b])
            }
            _ => Err(Error::Unsupported("probabilities need a discrete head".into())),
        }
    }

    /// Probability of the `true` outcome of a Bernoulli head.
    pub fn bernoulli<T: Real>(&self, params: &[T], obs: Obs<'_, T>) -> Result<T> {
        if self.output != Output::Bernoulli {
            return Err(Error::Unsupported("not a Bernoulli head".into()));
        }
        Ok(sigmoid(self.forward(params, obs)?.output[0]))
    }

    /// Mean and standard deviation of a Gaussian head.
    pub fn gaussian<T: Real>(&self, params: &[T], obs: Obs<'_, T>) -> Result<(Vec<T>, Vec<T>)> {
        let Output::Gaussian { tanh_mean, .. } = self.output else {
            return Err(Error::Unsupported("not a Gaussian head".into()));
        };
        let (_, log_std) = self.split(params)?;
        let raw = self.forward(params, obs)?.output;
        let mean = if tanh_mean { raw.iter().map(|x| x.tanh()).collect() } else { raw };
        Ok((mean, log_std.iter().map(|l| l.exp()).collect()))
    }

    pub fn values<T: Real>(&self, params: &[T], obs: Obs<'_, T>) -> Result<Vec<T>> {
        if !matches!(self.output, Output::Value { .. }) {
            return Err(Error::Unsupported("not a value head".into()));
        }
        Ok(self.forward(params, obs)?.output)
    }

    pub fn log_prob<T: Real>(&self, params: &[T], obs: Obs<'_, T>, outcome: Outcome<'_, T>) -> Result<T> {
        let mut scratch = vec![T::zero(); self.n_params()];
        self.grad_log_prob_inner(params, obs, outcome, None, &mut scratch)
    }

    /// Accumulates `scale * grad log p(outcome)` and returns `log p(outcome)`.
    pub fn grad_log_prob<T: Real>(
        &self,
        params: &[T],
        obs: Obs<'_, T>,
        outcome: Outcome<'_, T>,
        scale: T,
        grad: &mut [T],
    ) -> Result<T> {
        if grad.len() != self.n_params() {
            return Err(Error::Shape { expected: self.n_params(), got: grad.len() });
        }
        self.grad_log_prob_inner(params, obs, outcome, Some(scale), grad)
    }

    fn grad_log_prob_inner<T: Real>(
        &self,
        params: &[T],
        obs: Obs<'_, T>,
        outcome: Outcome<'_, T>,
        scale: Option<T>,
        grad: &mut [T],
    ) -> Result<T> {
        let fwd = self.forward(params, obs)?;
        let raw = &fwd.output;
        match (self.output, outcome) {
            (Output::Categorical { n }, Outcome::Index(k)) => {
                Error::check_index("outcome", k, n)?;
                let p = softmax(raw);
                if p[k] <= T::zero() {
                    return Err(zero_prob("categorical"));
                }
                if let Some(c) = scale {
                    let d: Vec<T> =
                        p.iter().enumerate().map(|(i, &pi)| c * (if i == k { T::one() } else { T::zero() } - pi)).collect();
                    self.backward(params, &fwd, &d, grad)?;
                }
                Ok(p[k].ln())
            }
            (Output::Bernoulli, Outcome::Bool(b)) => {
                let z = raw[0];
                // log sigmoid(z) = -softplus(-z), log(1 - sigmoid(z)) = -softplus(z)
                let softplus = |x: T| x.max(T::zero()) + (-x.abs()).exp().ln_1p();
                let (lp, dz, p) = if b {
                    (-softplus(-z), sigmoid(-z), sigmoid(z))
                } else {
                    (-softplus(z), -sigmoid(z), sigmoid(-z))
                };
                if p <= T::zero() {
                    return Err(zero_prob("Bernoulli"));
                }
                if let Some(c) = scale {
                    self.backward(params, &fwd, &[c * dz], grad)?;
                }
                Ok(lp)
            }
            (Output::Gaussian { action_dim, tanh_mean }, Outcome::Continuous(x)) => {
                if x.len() != action_dim {
                    return Err(Error::Shape { expected: action_dim, got: x.len() });
                }
                let (_, log_std) = self.split(params)?;
                let half_log_2pi = T::lit(0.5 * (2.0 * PI).ln());
                let mut lp = T::zero();
                let mut d_raw = vec![T::zero(); action_dim];
                let mut d_log_std = vec![T::zero(); action_dim];
                for i in 0..action_dim {
                    let mean = if tanh_mean { raw[i].tanh() } else { raw[i] };
                    let std = log_std[i].exp();
                    let zscore = (x[i] - mean) / std;
                    lp += -T::lit(0.5) * zscore * zscore - log_std[i] - half_log_2pi;
                    let d_mean = zscore / std;
                    d_raw[i] = if tanh_mean { d_mean * (T::one() - mean * mean) } else { d_mean };
                    d_log_std[i] = zscore * zscore - T::one();
                }
                if let Some(c) = scale {
                    d_raw.iter_mut().for_each(|d| *d *= c);
                    self.backward(params, &fwd, &d_raw, grad)?;
                    let n = self.network.n_params();
                    for (g, d) in grad[n..].iter_mut().zip(d_log_std) {
                        *g += c * d;
                    }
                }
                Ok(lp)
            }
            _ => Err(Error::Unsupported("outcome does not match the head".into())),
        }
    }

    pub fn entropy<T: Real>(&self, params: &[T], obs: Obs<'_, T>) -> Result<T> {
        let mut scratch = vec![T::zero(); self.n_params()];
        self.grad_entropy_inner(params, obs, None, &mut scratch)
    }

    /// Accumulates `scale * grad H` and returns the entropy `H`.
    pub fn grad_entropy<T: Real>(&self, params: &[T], obs: Obs<'_, T>, scale: T, grad: &mut [T]) -> Result<T> {
        if grad.len() != self.n_params() {
            return Err(Error::Shape { expected: self.n_params(), got: grad.len() });
        }
        self.grad_entropy_inner(params, obs, Some(scale), grad)
    }

    fn grad_entropy_inner<T: Real>(&self, params: &[T], obs: Obs<'_, T>, scale: Option<T>, grad: &mut [T]) -> Result<T> {
        let fwd = self.forward(params, obs)?;
        match self.output {
            Output::Categorical { .. } => {
                let p = softmax(&fwd.output);
                let logp: Vec<T> = p.iter().map(|&x| if x > T::zero() { x.ln() } else { T::zero() }).collect();
                let h = -p.iter().zip(&logp).map(|(&a, &b)| a * b).sum::<T>();
                if let Some(c) = scale {
                    // dH/dz_i = -p_i (log p_i + H)
                    let d: Vec<T> = p.iter().zip(&logp).map(|(&pi, &li)| -c * pi * (li + h)).collect();
                    self.backward(params, &fwd, &d, grad)?;
                }
                Ok(h)
            }
            Output::Bernoulli => {
                let z = fwd.output[0];
                let b = sigmoid(z);
                let nb = sigmoid(-z);
                let term = |x: T| if x > T::zero() { x * x.ln() } else { T::zero() };
                let h = -(term(b) + term(nb));
                if let Some(c) = scale {
                    self.backward(params, &fwd, &[-c * z * b * nb], grad)?;
                }
                Ok(h)
            }
            Output::Gaussian { action_dim, .. } => {
                let (_, log_std) = self.split(params)?;
                let k = T::lit(0.5 * (2.0 * PI * std::f64::consts::E).ln());
                let h = log_std.iter().map(|&l| l + k).sum();
                if let Some(c) = scale {
                    let n = self.network.n_params();
                    grad[n..n + action_dim].iter_mut().for_each(|g| *g += c);
                }
                Ok(h)
            }
            Output::Value { .. } => Err(Error::Unsupported("value heads have no entropy".into())),
        }
    }

    /// Accumulates `scale * grad values[index]` and returns the value.
    pub fn grad_value<T: Real>(&self, params: &[T], obs: Obs<'_, T>, index: usize, scale: T, grad: &mut [T]) -> Result<T> {
        let Output::Value { n } = self.output else {
            return Err(Error::Unsupported("not a value head".into()));
        };
        Error::check_index("value output", index, n)?;
        if grad.len() != self.n_params() {
            return Err(Error::Shape { expected: self.n_params(), got: grad.len() });
        }
        let fwd = self.forward(params, obs)?;
        let mut d = vec![T::zero(); n];
        d[index] = scale;
        self.backward(params, &fwd, &d, grad)?;
        Ok(fwd.output[index])
    }

    /// Draws from a discrete head with one uniform draw.
    pub fn sample_discrete<T: Real, R: Rng + ?Sized>(&self, params: &[T], obs: Obs<'_, T>, rng: &mut R) -> Result<usize> {
        Ok(crate::mdp::sample_categorical(&self.probs(params, obs)?, rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tabular(n_in: usize, output: Output) -> Head {
        let n_out = output.network_outputs();
        Head::new(Network::Tabular { n_inputs: n_in, n_outputs: n_out }, output).unwrap()
    }

    #[test]
    fn zero_logits_are_uniform_and_half_termination() {
        let h = tabular(2, Output::Categorical { n: 4 });
        assert_eq!(h.probs(&[0.0f64; 8], Obs::Index(1)).unwrap(), vec![0.25; 4]);
        let b = tabular(2, Output::Bernoulli);
        assert_eq!(b.bernoulli(&[0.0f64; 2], Obs::Index(0)).unwrap(), 0.5);
    }

    #[test]
    fn softmax_score_on_two_actions() {
        let h = tabular(1, Output::Categorical { n: 2 });
        let mut g = vec![0.0f64; 2];
        let lp = h.grad_log_prob(&[0.0, 0.0], Obs::Index(0), Outcome::Index(0), 1.0, &mut g).unwrap();
        assert_eq!(g, vec![0.5, -0.5]);
        assert!((lp - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn score_identity_holds() {
        let h = tabular(1, Output::Categorical { n: 3 });
        let params = [0.3f64, -1.2, 2.0];
        let p = h.probs(&params, Obs::Index(0)).unwrap();
        let mut g = vec![0.0; 3];
        for (k, &pk) in p.iter().enumerate() {
            h.grad_log_prob(&params, Obs::Index(0), Outcome::Index(k), pk, &mut g).unwrap();
        }
        assert!(g.iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn saturated_termination_rejects_impossible_outcome() {
        let b = tabular(1, Output::Bernoulli);
        assert!(b.log_prob(&[-1e6f64], Obs::Index(0), Outcome::Bool(true)).is_err());
        assert_eq!(b.log_prob(&[-1e6f64], Obs::Index(0), Outcome::Bool(false)).unwrap(), 0.0);
    }

    #[test]
    fn mismatched_outcome_is_unsupported() {
        let h = tabular(1, Output::Categorical { n: 2 });
        assert!(matches!(h.log_prob(&[0.0f64; 2], Obs::Index(0), Outcome::Bool(true)), Err(Error::Unsupported(_))));
    }
}
