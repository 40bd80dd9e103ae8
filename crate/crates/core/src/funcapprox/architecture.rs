//! Differentiable master policy, intra-option policies and terminations
//! sharing one flat parameter vector.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::head::{Head, Outcome, Output};
use super::network::{Activation, Network, Obs};
use super::params::ParamVector;
use crate::error::{Error, Result};
use crate::mdp::{MasterPolicy, OptionDef, OptionModel, OptionSet, OptionSlot, PolicyTable, TabularMdp};
use crate::scalar::{softmax, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    /// One logit table per head, indexed by state.
    #[default]
    SoftmaxTabular,
    /// Linear heads; continuous intra-option policies are Gaussian with a
    /// state-independent standard deviation.
    LinearGaussian,
    /// Per-head multilayer perceptrons.
    Feedforward,
}

fn default_hidden() -> Vec<usize> {
    vec![64, 64]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureSpec {
    #[serde(default)]
    pub kind: ParamKind,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
}

impl Default for ArchitectureSpec {
    fn default() -> Self {
        Self { kind: ParamKind::default(), hidden: default_hidden(), activation: Activation::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionSpace {
    Discrete(usize),
    Continuous(usize),
}

impl ArchitectureSpec {
    pub fn network(&self, n_inputs: usize, n_outputs: usize) -> Network {
        match self.kind {
            ParamKind::SoftmaxTabular => Network::Tabular { n_inputs, n_outputs },
            ParamKind::LinearGaussian => Network::Linear { n_inputs, n_outputs },
            ParamKind::Feedforward => {
                Network::Mlp { n_inputs, hidden: self.hidden.clone(), n_outputs, activation: self.activation }
            }
        }
    }

    pub fn policy_head(&self, n_inputs: usize, action: ActionSpace) -> Result<Head> {
        match action {
            ActionSpace::Discrete(n) => Head::new(self.network(n_inputs, n), Output::Categorical { n }),
            ActionSpace::Continuous(d) => {
                Head::new(self.network(n_inputs, d), Output::Gaussian { action_dim: d, tanh_mean: false })
            }
        }
    }

    pub fn termination_head(&self, n_inputs: usize) -> Result<Head> {
        Head::new(self.network(n_inputs, 1), Output::Bernoulli)
    }

    pub fn value_head(&self, n_inputs: usize, n_values: usize) -> Result<Head> {
        Head::new(self.network(n_inputs, n_values), Output::Value { n: n_values })
    }
}

/// `pi` (theta), `{pi_o}` (nu) and `{beta_o}` (phi). Each option owns its own
/// intra-option and termination parameters; nothing is shared.
#[derive(Debug, Clone, PartialEq)]
pub struct OptionArchitecture<T> {
    n_options: usize,
    master: Head,
    intra: Head,
    termination: Head,
    pub params: ParamVector<T>,
}

fn unit<T: Real>(i: usize, j: usize) -> T {
    if i == j {
        T::one()
    } else {
        T::zero()
    }
}

impl<T: Real> OptionArchitecture<T> {
    pub fn new<R: Rng + ?Sized>(
        spec: &ArchitectureSpec,
        n_inputs: usize,
        action: ActionSpace,
        n_options: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if n_options == 0 {
            return Err(Error::Config("need at least one option".into()));
        }
        let master = spec.policy_head(n_inputs, ActionSpace::Discrete(n_options))?;
        let intra = spec.policy_head(n_inputs, action)?;
        let termination = spec.termination_head(n_inputs)?;
        let params = ParamVector::zeros(master.n_params(), n_options * intra.n_params(), n_options * termination.n_params());
        let mut arch = Self { n_options, master, intra, termination, params };
        arch.reinitialize(rng);
        Ok(arch)
    }

    pub fn reinitialize<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let r = self.theta_range();
        self.master.init(rng, &mut self.params.as_mut_slice()[r]);
        for o in 0..self.n_options {
            let r = self.nu_range(o);
            self.intra.init(rng, &mut self.params.as_mut_slice()[r]);
            let r = self.phi_range(o);
            self.termination.init(rng, &mut self.params.as_mut_slice()[r]);
        }
    }

    pub fn n_options(&self) -> usize {
        self.n_options
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn master_head(&self) -> &Head {
        &self.master
    }

    pub fn intra_head(&self) -> &Head {
        &self.intra
    }

    pub fn termination_head(&self) -> &Head {
        &self.termination
    }

    pub fn theta_range(&self) -> Range<usize> {
        self.params.theta_range()
    }

    pub fn nu_range(&self, o: usize) -> Range<usize> {
        let n = self.intra.n_params();
        let start = self.params.nu_range().start + o * n;
        start..start + n
    }

    pub fn phi_range(&self, o: usize) -> Range<usize> {
        let n = self.termination.n_params();
        let start = self.params.phi_range().start + o * n;
        start..start + n
    }

    fn slice(&self, r: Range<usize>) -> &[T] {
        &self.params.as_slice()[r]
    }

    fn check_option(&self, o: usize) -> Result<()> {
        Error::check_index("option", o, self.n_options)
    }

    pub fn master_probs(&self, obs: Obs<'_, T>) -> Result<Vec<T>> {
        self.master.probs(self.slice(self.theta_range()), obs)
    }

    pub fn beta(&self, o: usize, obs: Obs<'_, T>) -> Result<T> {
        self.check_option(o)?;
        self.termination.bernoulli(self.slice(self.phi_range(o)), obs)
    }

    pub fn intra_probs(&self, o: usize, obs: Obs<'_, T>) -> Result<Vec<T>> {
        self.check_option(o)?;
        self.intra.probs(self.slice(self.nu_range(o)), obs)
    }

    /// `pi_high(. | (prev, s)) = (1 - beta_prev(s)) 1[. = prev] + beta_prev(s) pi(. | s)`.
    pub fn high_probs(&self, prev: OptionSlot, obs: Obs<'_, T>) -> Result<Vec<T>> {
        let pi = self.master_probs(obs)?;
        let OptionSlot::Real(p) = prev else {
            return Ok(pi);
        };
        let beta = self.beta(p, obs)?;
        let mut out: Vec<T> = pi.iter().map(|&x| beta * x).collect();
        out[p] += T::one() - beta;
        Ok(out)
    }

    pub fn log_high(&self, prev: OptionSlot, obs: Obs<'_, T>, o: usize) -> Result<T> {
        self.check_option(o)?;
        let p = self.high_probs(prev, obs)?[o];
        if p <= T::zero() {
            return Err(Error::ZeroProbability(format!("option {o} is unreachable from {prev:?}")));
        }
        Ok(p.ln())
    }

    /// Accumulates `scale * grad log pi_high(o | (prev, s))` into the flat
    /// gradient (theta and the previous option's phi) and returns the
    /// log-probability.
    pub fn grad_log_high(&self, prev: OptionSlot, obs: Obs<'_, T>, o: usize, scale: T, grad: &mut [T]) -> Result<T> {
        self.check_option(o)?;
        let OptionSlot::Real(p) = prev else {
            let r = self.theta_range();
            return self.master.grad_log_prob(self.slice(r.clone()), obs, Outcome::Index(o), scale, &mut grad[r]);
        };
        let theta = self.slice(self.theta_range());
        let fwd = self.master.forward(theta, obs)?;
        let pi = softmax(&fwd.output);
        let beta = self.beta(p, obs)?;
        let high = (T::one() - beta) * unit::<T>(o, p) + beta * pi[o];
        if high <= T::zero() {
            return Err(Error::ZeroProbability(format!("option {o} is unreachable from {prev:?}")));
        }
        let c = scale / high;
        let d_theta: Vec<T> = (0..self.n_options).map(|i| c * beta * pi[o] * (unit::<T>(i, o) - pi[i])).collect();
        self.master.backward(theta, &fwd, &d_theta, &mut grad[self.theta_range()])?;
        self.termination_backward(p, obs, c * beta * (T::one() - beta) * (pi[o] - unit::<T>(o, p)), grad)?;
        Ok(high.ln())
    }

    fn termination_backward(&self, o: usize, obs: Obs<'_, T>, d_logit: T, grad: &mut [T]) -> Result<()> {
        let r = self.phi_range(o);
        let phi = self.slice(r.clone());
        let fwd = self.termination.forward(phi, obs)?;
        self.termination.backward(phi, &fwd, &[d_logit], &mut grad[r])
    }

    /// Entropy of `pi_high(. | (prev, s))`, accumulating `scale * grad H`.
    pub fn grad_entropy_high(&self, prev: OptionSlot, obs: Obs<'_, T>, scale: T, grad: &mut [T]) -> Result<T> {
        let OptionSlot::Real(p) = prev else {
            let r = self.theta_range();
            return self.master.grad_entropy(self.slice(r.clone()), obs, scale, &mut grad[r]);
        };
        let theta = self.slice(self.theta_range());
        let fwd = self.master.forward(theta, obs)?;
        let pi = softmax(&fwd.output);
        let beta = self.beta(p, obs)?;
        let high: Vec<T> =
            (0..self.n_options).map(|i| (T::one() - beta) * unit::<T>(i, p) + beta * pi[i]).collect();
        let neg_log: Vec<T> = high.iter().map(|&x| if x > T::zero() { -x.ln() } else { T::zero() }).collect();
        let h: T = high.iter().zip(&neg_log).map(|(&a, &b)| a * b).sum();
        let mean_c: T = pi.iter().zip(&neg_log).map(|(&a, &b)| a * b).sum();
        let d_theta: Vec<T> = (0..self.n_options).map(|i| scale * beta * pi[i] * (neg_log[i] - mean_c)).collect();
        self.master.backward(theta, &fwd, &d_theta, &mut grad[self.theta_range()])?;
        self.termination_backward(p, obs, scale * beta * (T::one() - beta) * (mean_c - neg_log[p]), grad)?;
        Ok(h)
    }

    pub fn entropy_high(&self, prev: OptionSlot, obs: Obs<'_, T>) -> Result<T> {
        let mut scratch = vec![T::zero(); self.n_params()];
        self.grad_entropy_high(prev, obs, T::zero(), &mut scratch)
    }

    pub fn log_intra(&self, o: usize, obs: Obs<'_, T>, action: Outcome<'_, T>) -> Result<T> {
        self.check_option(o)?;
        self.intra.log_prob(self.slice(self.nu_range(o)), obs, action)
    }

    pub fn grad_log_intra(&self, o: usize, obs: Obs<'_, T>, action: Outcome<'_, T>, scale: T, grad: &mut [T]) -> Result<T> {
        self.check_option(o)?;
        let r = self.nu_range(o);
        self.intra.grad_log_prob(self.slice(r.clone()), obs, action, scale, &mut grad[r])
    }

    pub fn grad_entropy_intra(&self, o: usize, obs: Obs<'_, T>, scale: T, grad: &mut [T]) -> Result<T> {
        self.check_option(o)?;
        let r = self.nu_range(o);
        self.intra.grad_entropy(self.slice(r.clone()), obs, scale, &mut grad[r])
    }

    pub fn entropy_intra(&self, o: usize, obs: Obs<'_, T>) -> Result<T> {
        self.check_option(o)?;
        self.intra.entropy(self.slice(self.nu_range(o)), obs)
    }

    pub fn grad_log_master(&self, obs: Obs<'_, T>, o: usize, scale: T, grad: &mut [T]) -> Result<T> {
        let r = self.theta_range();
        self.master.grad_log_prob(self.slice(r.clone()), obs, Outcome::Index(o), scale, &mut grad[r])
    }

    pub fn grad_entropy_master(&self, obs: Obs<'_, T>, scale: T, grad: &mut [T]) -> Result<T> {
        let r = self.theta_range();
        self.master.grad_entropy(self.slice(r.clone()), obs, scale, &mut grad[r])
    }

    pub fn grad_log_termination(&self, o: usize, obs: Obs<'_, T>, stop: bool, scale: T, grad: &mut [T]) -> Result<T> {
        self.check_option(o)?;
        let r = self.phi_range(o);
        self.termination.grad_log_prob(self.slice(r.clone()), obs, Outcome::Bool(stop), scale, &mut grad[r])
    }

    pub fn grad_entropy_termination(&self, o: usize, obs: Obs<'_, T>, scale: T, grad: &mut [T]) -> Result<T> {
        self.check_option(o)?;
        let r = self.phi_range(o);
        self.termination.grad_entropy(self.slice(r.clone()), obs, scale, &mut grad[r])
    }

    /// Accumulates `scale * grad beta_o(s)` (not its log).
    pub fn grad_beta(&self, o: usize, obs: Obs<'_, T>, scale: T, grad: &mut [T]) -> Result<T> {
        let beta = self.beta(o, obs)?;
        self.termination_backward(o, obs, scale * beta * (T::one() - beta), grad)?;
        Ok(beta)
    }

    /// Tabulates every head at each state index, giving the option model the
    /// parameters currently encode.
    pub fn to_model(&self, mdp: &TabularMdp<T>) -> Result<OptionModel<T>> {
        if !self.intra.is_discrete() {
            return Err(Error::Unsupported("continuous intra-option policies cannot be tabulated".into()));
        }
        let ns = mdp.n_states();
        let na = mdp.n_actions();
        let mut master = Vec::with_capacity(ns * self.n_options);
        for s in 0..ns {
            master.extend(self.master_probs(Obs::Index(s))?);
        }
        let options = (0..self.n_options)
            .map(|o| {
                let mut pi = Vec::with_capacity(ns * na);
                let mut beta = Vec::with_capacity(ns);
                for s in 0..ns {
                    pi.extend(self.intra_probs(o, Obs::Index(s))?);
                    beta.push(self.beta(o, Obs::Index(s))?);
                }
                OptionDef::new(PolicyTable::new(ns, na, pi)?, beta)
            })
            .collect::<Result<Vec<_>>>()?;
        OptionModel::new(
            mdp.clone(),
            OptionSet::new(options)?,
            MasterPolicy::new(PolicyTable::new(ns, self.n_options, master)?),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{make_environment, EnvParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn randomized(kind: ParamKind, seed: u64) -> OptionArchitecture<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = ArchitectureSpec { kind, hidden: vec![6, 5], ..Default::default() };
        let mut arch = OptionArchitecture::new(&spec, 4, ActionSpace::Discrete(3), 3, &mut rng).unwrap();
        for p in arch.params.as_mut_slice() {
            *p = rng.random_range(-1.5..1.5);
        }
        arch
    }

    #[test]
    fn tabulated_high_policy_is_the_option_kernel_bit_for_bit() {
        // chain of 3 live states plus the terminal: 4 states, 2 actions
        let env = make_environment::<f64>("chain", &EnvParams { chain_length: Some(3), ..Default::default() }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut arch =
            OptionArchitecture::new(&ArchitectureSpec::default(), 4, ActionSpace::Discrete(2), 3, &mut rng).unwrap();
        for (i, p) in arch.params.as_mut_slice().iter_mut().enumerate() {
            *p = (i as f64 * 0.37).sin() * 2.0;
        }
        let model = arch.to_model(&env.mdp).unwrap();
        for s in 0..4 {
            for slot in 0..=3 {
                let prev = OptionSlot::from_slot_index(slot);
                assert_eq!(arch.high_probs(prev, Obs::Index(s)).unwrap(), model.option_transition_kernel(s, prev).unwrap());
            }
        }
    }

    #[test]
    fn high_log_gradient_matches_finite_differences() {
        for kind in [ParamKind::SoftmaxTabular, ParamKind::LinearGaussian, ParamKind::Feedforward] {
            let arch = randomized(kind, 3);
            for (prev, o) in [(OptionSlot::Dummy, 1), (OptionSlot::Real(0), 0), (OptionSlot::Real(2), 1)] {
                let mut g = vec![0.0; arch.n_params()];
                arch.grad_log_high(prev, Obs::Index(2), o, 1.0, &mut g).unwrap();
                let mut eg = vec![0.0; arch.n_params()];
                arch.grad_entropy_high(prev, Obs::Index(2), 1.0, &mut eg).unwrap();
                for i in 0..arch.n_params() {
                    let mut a = arch.clone();
                    a.params.as_mut_slice()[i] += 1e-6;
                    let (up, hup) = (a.log_high(prev, Obs::Index(2), o).unwrap(), a.entropy_high(prev, Obs::Index(2)).unwrap());
                    a.params.as_mut_slice()[i] -= 2e-6;
                    let (dn, hdn) = (a.log_high(prev, Obs::Index(2), o).unwrap(), a.entropy_high(prev, Obs::Index(2)).unwrap());
                    assert!((g[i] - (up - dn) / 2e-6).abs() < 1e-7, "{kind:?} log param {i}");
                    assert!((eg[i] - (hup - hdn) / 2e-6).abs() < 1e-7, "{kind:?} entropy param {i}");
                }
            }
        }
    }
}
