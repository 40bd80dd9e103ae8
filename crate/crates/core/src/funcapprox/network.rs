//! Parameter-free network shapes with hand-written forward and backward
//! passes. Parameters live in caller-owned flat slices.
//!
//! Layouts: a tabular network is an `n_inputs x n_outputs` row-major table;
//! every dense layer is `W` (`out x in`, row-major) followed by `b`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    fn apply<T: Real>(self, z: T) -> T {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(T::zero()),
        }
    }

    /// Derivative in terms of the pre-activation `z` and output `h`.
    fn slope<T: Real>(self, z: T, h: T) -> T {
        match self {
            Activation::Tanh => T::one() - h * h,
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }
}

/// Network input. An index is a tabular state; dense networks read it as a
/// one-hot vector of length `n_inputs` (position `index`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Obs<'a, T> {
    Index(usize),
    Vector(&'a [T]),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Network {
    Tabular { n_inputs: usize, n_outputs: usize },
    Linear { n_inputs: usize, n_outputs: usize },
    Mlp { n_inputs: usize, hidden: Vec<usize>, n_outputs: usize, activation: Activation },
}

#[derive(Debug, Clone, PartialEq)]
enum Cache<T> {
    Tabular(usize),
    Dense { input: Vec<T>, pre: Vec<Vec<T>>, post: Vec<Vec<T>> },
}

/// Result of a forward pass, kept for the matching backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward<T> {
    pub output: Vec<T>,
    cache: Cache<T>,
}

impl<T: Real> Forward<T> {
    /// Smallest `|z|` over hidden-layer pre-activations, `None` for networks
    /// without hidden layers. ReLU is not differentiable where this is zero.
    pub fn hidden_margin(&self) -> Option<T> {
        match &self.cache {
            Cache::Dense { pre, .. } if pre.len() > 1 => {
                pre[..pre.len() - 1].iter().flatten().map(|z| z.abs()).reduce(|a, b| if b < a { b } else { a })
            }
            _ => None,
        }
    }
}

impl Network {
    pub fn n_inputs(&self) -> usize {
        match self {
            Network::Tabular { n_inputs, .. } | Network::Linear { n_inputs, .. } | Network::Mlp { n_inputs, .. } => {
                *n_inputs
            }
        }
    }

    pub fn n_outputs(&self) -> usize {
        match self {
            Network::Tabular { n_outputs, .. }
            | Network::Linear { n_outputs, .. }
            | Network::Mlp { n_outputs, .. } => *n_outputs,
        }
    }

    fn dims(&self) -> Vec<usize> {
        match self {
            Network::Tabular { .. } => Vec::new(),
            Network::Linear { n_inputs, n_outputs } => vec![*n_inputs, *n_outputs],
            Network::Mlp { n_inputs, hidden, n_outputs, .. } => {
                let mut d = vec![*n_inputs];
                d.extend(hidden);
                d.push(*n_outputs);
                d
            }
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            Network::Tabular { n_inputs, n_outputs } => n_inputs * n_outputs,
            _ => self.dims().windows(2).map(|w| w[1] * w[0] + w[1]).sum(),
        }
    }

    fn activation(&self) -> Activation {
        match self {
            Network::Mlp { activation, .. } => *activation,
            _ => Activation::Tanh,
        }
    }

    /// Tabular and linear networks start at zero (uniform softmax, `beta = 0.5`);
    /// dense layers of an MLP use Glorot-uniform weights, with the output
    /// layer scaled by `output_scale`.
    pub fn init<T: Real, R: Rng + ?Sized>(&self, rng: &mut R, params: &mut [T], output_scale: f64) {
        params.iter_mut().for_each(|p| *p = T::zero());
        if let Network::Mlp { .. } = self {
            let dims = self.dims();
            let mut offset = 0;
            for (l, w) in dims.windows(2).enumerate() {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let scale = if l + 2 == dims.len() { output_scale } else { 1.0 };
                for p in &mut params[offset..offset + fan_in * fan_out] {
                    *p = T::lit(scale * rng.random_range(-limit..=limit));
                }
                offset += fan_in * fan_out + fan_out;
            }
        }
    }

    fn input_vector<T: Real>(&self, obs: Obs<'_, T>) -> Result<Vec<T>> {
        let n = self.n_inputs();
        match obs {
            Obs::Index(i) => {
                Error::check_index("input", i, n)?;
                let mut x = vec![T::zero(); n];
                x[i] = T::one();
                Ok(x)
            }
            Obs::Vector(v) if v.len() == n => Ok(v.to_vec()),
            Obs::Vector(v) => Err(Error::Shape { expected: n, got: v.len() }),
        }
    }

    pub fn forward<T: Real>(&self, params: &[T], obs: Obs<'_, T>) -> Result<Forward<T>> {
        if params.len() != self.n_params() {
            return Err(Error::Shape { expected: self.n_params(), got: params.len() });
        }
        if let Network::Tabular { n_inputs, n_outputs } = self {
            let Obs::Index(i) = obs else {
                return Err(Error::Unsupported("tabular networks take state indices".into()));
            };
            Error::check_index("input", i, *n_inputs)?;
            return Ok(Forward {
                output: params[i * n_outputs..(i + 1) * n_outputs].to_vec(),
                cache: Cache::Tabular(i),
            });
        }
        let input = self.input_vector(obs)?;
        let dims = self.dims();
        let act = self.activation();
        let n_layers = dims.len() - 1;
        let mut pre = Vec::with_capacity(n_layers);
        let mut post: Vec<Vec<T>> = Vec::with_capacity(n_layers);
        let mut offset = 0;
        for l in 0..n_layers {
            let (din, dout) = (dims[l], dims[l + 1]);
            let x = if l == 0 { &input } else { &post[l - 1] };
            let w = &params[offset..offset + din * dout];
            let b = &params[offset + din * dout..offset + din * dout + dout];
            let z: Vec<T> = (0..dout)
                .map(|j| {
                    let row = &w[j * din..(j + 1) * din];
                    row.iter().zip(x).fold(b[j], |acc, (&wi, &xi)| acc + wi * xi)
                })
                .collect();
            let h = if l + 1 == n_layers { z.clone() } else { z.iter().map(|&zi| act.apply(zi)).collect() };
            pre.push(z);
            post.push(h);
            offset += din * dout + dout;
        }
        Ok(Forward { output: post.last().unwrap().clone(), cache: Cache::Dense { input, pre, post } })
    }

    /// Accumulates `d_output^T * d output / d params` into `grad`.
    pub fn backward<T: Real>(&self, params: &[T], fwd: &Forward<T>, d_output: &[T], grad: &mut [T]) -> Result<()> {
        if d_output.len() != self.n_outputs() {
            return Err(Error::Shape { expected: self.n_outputs(), got: d_output.len() });
        }
        if grad.len() != self.n_params() {
            return Err(Error::Shape { expected: self.n_params(), got: grad.len() });
        }
        match &fwd.cache {
            Cache::Tabular(i) => {
                let n = self.n_outputs();
                for (g, &d) in grad[i * n..(i + 1) * n].iter_mut().zip(d_output) {
                    *g += d;
                }
            }
            Cache::Dense { input, pre, post } => {
                let dims = self.dims();
                let act = self.activation();
                let n_layers = dims.len() - 1;
                let mut offsets = Vec::with_capacity(n_layers);
                let mut off = 0;
                for w in dims.windows(2) {
                    offsets.push(off);
                    off += w[0] * w[1] + w[1];
                }
                let mut delta = d_output.to_vec();
                for l in (0..n_layers).rev() {
                    let (din, dout) = (dims[l], dims[l + 1]);
                    if l + 1 != n_layers {
                        for j in 0..dout {
                            delta[j] *= act.slope(pre[l][j], post[l][j]);
                        }
                    }
                    let x = if l == 0 { input } else { &post[l - 1] };
                    let o = offsets[l];
                    for j in 0..dout {
                        let dj = delta[j];
                        if dj == T::zero() {
                            continue;
                        }
                        for (g, &xi) in grad[o + j * din..o + (j + 1) * din].iter_mut().zip(x) {
                            *g += dj * xi;
                        }
                        grad[o + din * dout + j] += dj;
                    }
                    if l > 0 {
                        let w = &params[o..o + din * dout];
                        let mut prev = vec![T::zero(); din];
                        for j in 0..dout {
                            let dj = delta[j];
                            if dj == T::zero() {
                                continue;
                            }
                            for (p, &wi) in prev.iter_mut().zip(&w[j * din..(j + 1) * din]) {
                                *p += dj * wi;
                            }
                        }
                        delta = prev;
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parameter_counts() {
        assert_eq!(Network::Tabular { n_inputs: 3, n_outputs: 2 }.n_params(), 6);
        assert_eq!(Network::Linear { n_inputs: 3, n_outputs: 2 }.n_params(), 8);
        let mlp = Network::Mlp { n_inputs: 4, hidden: vec![64, 64], n_outputs: 2, activation: Activation::Tanh };
        assert_eq!(mlp.n_params(), 4 * 64 + 64 + 64 * 64 + 64 + 64 * 2 + 2);
    }

    #[test]
    fn tabular_rejects_vector_input() {
        let net = Network::Tabular { n_inputs: 3, n_outputs: 2 };
        assert!(net.forward(&[0.0f64; 6], Obs::Vector(&[1.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn index_input_is_one_hot_for_dense_networks() {
        let net = Network::Linear { n_inputs: 3, n_outputs: 1 };
        let params = [1.0f64, 2.0, 3.0, 0.5];
        let a = net.forward(&params, Obs::Index(1)).unwrap().output;
        let b = net.forward(&params, Obs::Vector(&[0.0, 1.0, 0.0])).unwrap().output;
        assert_eq!(a, vec![2.5]);
        assert_eq!(a, b);
    }

    #[test]
    fn mlp_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for act in [Activation::Tanh, Activation::Relu] {
            let net = Network::Mlp { n_inputs: 3, hidden: vec![5, 4], n_outputs: 2, activation: act };
            let mut params = vec![0.0f64; net.n_params()];
            net.init(&mut rng, &mut params, 1.0);
            let x = [0.3, -0.7, 1.1];
            let d = [0.6, -1.3];
            let f = |p: &[f64]| {
                let out = net.forward(p, Obs::Vector(&x)).unwrap().output;
                out[0] * d[0] + out[1] * d[1]
            };
            let fwd = net.forward(&params, Obs::Vector(&x)).unwrap();
            let mut grad = vec![0.0; params.len()];
            net.backward(&params, &fwd, &d, &mut grad).unwrap();
            for i in 0..params.len() {
                let mut p = params.clone();
                p[i] += 1e-6;
                let up = f(&p);
                p[i] -= 2e-6;
                let down = f(&p);
                assert!((grad[i] - (up - down) / 2e-6).abs() < 1e-7, "param {i}");
            }
        }
    }
}
