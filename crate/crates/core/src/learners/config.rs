//! Algorithm identifiers and learner hyperparameters.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcapprox::{AdamConfig, ArchitectureSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    DacPpo,
    DacA2c,
    AhpPpo,
    Ppo,
    A2c,
    Oc,
    IopgPosteriorDemo,
    Ioq,
    Smdpq,
}

impl Algorithm {
    pub const ALL: [Algorithm; 9] = [
        Algorithm::DacPpo,
        Algorithm::DacA2c,
        Algorithm::AhpPpo,
        Algorithm::Ppo,
        Algorithm::A2c,
        Algorithm::Oc,
        Algorithm::IopgPosteriorDemo,
        Algorithm::Ioq,
        Algorithm::Smdpq,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Algorithm::DacPpo => "dac-ppo",
            Algorithm::DacA2c => "dac-a2c",
            Algorithm::AhpPpo => "ahp-ppo",
            Algorithm::Ppo => "ppo",
            Algorithm::A2c => "a2c",
            Algorithm::Oc => "oc",
            Algorithm::IopgPosteriorDemo => "iopg-posterior-demo",
            Algorithm::Ioq => "ioq",
            Algorithm::Smdpq => "smdpq",
        }
    }

    /// Whether the learner runs options (and so has an option trace).
    pub fn uses_options(self) -> bool {
        !matches!(self, Algorithm::Ppo | Algorithm::A2c)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.id() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = Algorithm::ALL.iter().map(|a| a.id()).collect();
                Error::Config(format!("unknown algorithm `{s}` (known: {})", known.join(", ")))
            })
    }
}

/// How DAC splits its optimisation between the two MDPs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DacSchedule {
    /// Both MDPs are optimised on every rollout from the same samples.
    #[default]
    Shared,
    /// Rollouts alternate between the high and the low MDP.
    Alternating,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticMode {
    /// Learn `v(s, o)` for the low MDP only; the high critic is
    /// `sum_o pi_high(o | prev, s) v(s, o)`.
    #[default]
    Single,
    /// Learn a separate high critic over `(prev, s)`.
    Double,
}

/// Hyperparameters shared by every learner. `None` fields take the
/// per-algorithm default from [`LearnerConfig::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerConfig {
    pub lr: f64,
    pub adam_eps: f64,
    pub max_grad_norm: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub minibatch: usize,
    pub rollout: Option<usize>,
    pub epochs: Option<usize>,
    pub n_workers: Option<usize>,
    /// Entropy weight of the high MDP (DAC), of the option decision (AHP).
    pub entropy_high: Option<f64>,
    /// Entropy weight of the low MDP (DAC, AHP).
    pub entropy_low: Option<f64>,
    /// Entropy weight of flat policies and of OC's intra-option policies.
    pub entropy: Option<f64>,
    pub normalize_advantages: Option<bool>,
    pub dac_schedule: DacSchedule,
    pub critic_mode: CriticMode,
    pub freeze_high: bool,
    pub freeze_low: bool,
    /// Exploration rate of value-based option selection.
    pub epsilon: f64,
    pub q_alpha: f64,
    /// Tabular step size decays as `q_alpha / (1 + n)^q_alpha_power`.
    pub q_alpha_power: f64,
    /// Intra-option Q-learning updates every consistent option.
    pub off_option: bool,
    /// Termination probability of the fixed options used by `ioq`/`smdpq`.
    pub fixed_option_beta: f64,
    /// Option-switching penalty for OC's termination gradient; off when unset.
    pub switch_penalty: Option<f64>,
    /// OC target critic refresh period, in optimisation steps.
    pub target_refresh: usize,
    pub architecture: ArchitectureSpec,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            adam_eps: 1e-5,
            max_grad_norm: 0.5,
            gae_lambda: 0.95,
            clip: 0.2,
            minibatch: 64,
            rollout: None,
            epochs: None,
            n_workers: None,
            entropy_high: None,
            entropy_low: None,
            entropy: None,
            normalize_advantages: None,
            dac_schedule: DacSchedule::default(),
            critic_mode: CriticMode::default(),
            freeze_high: false,
            freeze_low: false,
            epsilon: 0.1,
            q_alpha: 0.1,
            q_alpha_power: 0.0,
            off_option: true,
            fixed_option_beta: 0.25,
            switch_penalty: None,
            target_refresh: 1000,
            architecture: ArchitectureSpec::default(),
        }
    }
}

/// Per-algorithm values of the optional fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolved {
    pub rollout: usize,
    pub epochs: usize,
    pub n_workers: usize,
    pub entropy_high: f64,
    pub entropy_low: f64,
    pub entropy: f64,
    pub normalize_advantages: bool,
}

impl LearnerConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, eps: self.adam_eps, max_grad_norm: Some(self.max_grad_norm), ..Default::default() }
    }

    pub fn resolve(&self, algo: Algorithm) -> Resolved {
        use Algorithm::*;
        let (rollout, epochs, n_workers) = match algo {
            DacPpo => (2048, 5, 1),
            AhpPpo | Ppo => (2048, 10, 1),
            DacA2c | A2c | Oc => (5, 1, 4),
            IopgPosteriorDemo | Ioq | Smdpq => (1, 1, 1),
        };
        let (entropy_high, entropy_low, entropy) = match algo {
            // the low MDP of DAC+A2C keeps the A2C entropy so one option
            // reduces to flat A2C
            DacA2c => (0.01, 0.01, 0.0),
            DacPpo | AhpPpo => (0.01, 0.0, 0.0),
            A2c | Oc => (0.0, 0.0, 0.01),
            _ => (0.0, 0.0, 0.0),
        };
        let ppo_like = matches!(algo, DacPpo | AhpPpo | Ppo);
        Resolved {
            rollout: self.rollout.unwrap_or(rollout),
            epochs: self.epochs.unwrap_or(epochs),
            n_workers: self.n_workers.unwrap_or(n_workers),
            entropy_high: self.entropy_high.unwrap_or(entropy_high),
            entropy_low: self.entropy_low.unwrap_or(entropy_low),
            entropy: self.entropy.unwrap_or(entropy),
            normalize_advantages: self.normalize_advantages.unwrap_or(ppo_like),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [("lr", self.lr), ("adam_eps", self.adam_eps), ("max_grad_norm", self.max_grad_norm)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("gae_lambda", self.gae_lambda), ("epsilon", self.epsilon), ("fixed_option_beta", self.fixed_option_beta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !(self.q_alpha > 0.0 && self.q_alpha <= 1.0) {
            return Err(Error::Config(format!("q_alpha must lie in (0, 1], got {}", self.q_alpha)));
        }
        if self.clip < 0.0 || self.minibatch == 0 || self.target_refresh == 0 {
            return Err(Error::Config("clip must be non-negative; minibatch and target_refresh positive".into()));
        }
        for (name, v) in [("rollout", self.rollout), ("epochs", self.epochs), ("n_workers", self.n_workers)] {
            if v == Some(0) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.id().parse::<Algorithm>().unwrap(), a);
        }
        assert!("dac".parse::<Algorithm>().is_err());
    }

    #[test]
    fn defaults_follow_the_reference_hyperparameters() {
        let c = LearnerConfig::default();
        let a = c.adam();
        assert_eq!((a.lr, a.eps, a.max_grad_norm), (3e-4, 1e-5, Some(0.5)));
        let dac = c.resolve(Algorithm::DacPpo);
        assert_eq!((dac.rollout, dac.epochs, dac.entropy_high, dac.entropy_low), (2048, 5, 0.01, 0.0));
        assert_eq!(c.resolve(Algorithm::Ppo).epochs, 10);
        let a2c = c.resolve(Algorithm::DacA2c);
        assert_eq!((a2c.rollout, a2c.n_workers), (5, 4));
        assert_eq!((c.gae_lambda, c.clip, c.minibatch, c.epsilon), (0.95, 0.2, 64, 0.1));
    }

    #[test]
    fn toml_overrides_and_rejects_unknown_keys() {
        let c: LearnerConfig = toml::from_str("lr = 0.01\nrollout = 128\ncritic_mode = \"double\"").unwrap();
        assert_eq!(c.lr, 0.01);
        assert_eq!(c.resolve(Algorithm::DacPpo).rollout, 128);
        assert_eq!(c.critic_mode, CriticMode::Double);
        assert!(toml::from_str::<LearnerConfig>("learning_rate = 0.1").is_err());
        assert!(LearnerConfig { epsilon: 2.0, ..Default::default() }.validate().is_err());
    }
}
