//! Learning agents and the pieces they share: rollout buffers, advantage
//! estimation, clipped and vanilla policy gradients, value critics and
//! tabular option-value updates.

pub mod ahp;
pub mod buffer;
pub mod config;
pub mod dac;
pub mod flat;
pub mod gae;
pub mod iopg;
pub mod oc;
pub mod policy_grad;
pub mod qlearning;
pub mod runner;
pub mod tabular;

pub use ahp::{ahp_grad_log_prob, ahp_policy_logprob, ahp_sample, AhpAgent, AhpDecision, AhpSettings, Branch};
pub use config::{Algorithm, CriticMode, DacSchedule, LearnerConfig, Resolved};
pub use dac::{dac_sample, DacAgent, DacSettings, PolicyOptimizer};
pub use flat::{FlatAgent, FlatPolicy, FlatSettings};
pub use gae::{gae_advantages, gae_with_bootstrap, normalize_advantages};
pub use iopg::{iopg_posterior_step, PosteriorDemo, PosteriorState};
pub use oc::{OcAgent, OcSettings};
pub use policy_grad::{
    a2c_update, ppo_update, surrogate_gradient, vanilla_policy_gradient, Critic, PpoConfig, Scored, StochasticPolicy,
    SurrogateStats, ValueTarget,
};
pub use qlearning::{QTable, StepSize};
pub use runner::{EnvRunner, EpisodeRecord, Transition};
pub use tabular::{IntraOptionQAgent, SmdpQAgent};

use rand::{Rng, RngCore};

use crate::error::Result;
use crate::mdp::{repeat_action_options, Environment};
use crate::scalar::Real;

/// An agent that acts in every worker of a runner once per call and learns
/// from what it sees.
pub trait Learner<T: Real>: Send {
    fn step(&mut self, runner: &mut EnvRunner<T>, rng: &mut dyn RngCore) -> Result<()>;

    /// Option held by worker `w`, for agents that have options.
    fn active_option(&self, w: usize) -> Option<usize>;
}

/// Builds the agent for `algo` on `env`. The runner driving it must have
/// `config.resolve(algo).n_workers` workers.
pub fn make_learner<T: Real, R: Rng + ?Sized>(
    algo: Algorithm,
    config: &LearnerConfig,
    env: &Environment<T>,
    n_options: usize,
    rng: &mut R,
) -> Result<Box<dyn Learner<T>>> {
    config.validate()?;
    let (ns, na) = (env.mdp.n_states(), env.mdp.n_actions());
    let workers = config.resolve(algo).n_workers;
    let step_size = StepSize { alpha: config.q_alpha, power: config.q_alpha_power };
    let fixed = || repeat_action_options(ns, na, n_options, T::lit(config.fixed_option_beta));
    Ok(match algo {
        Algorithm::DacPpo | Algorithm::DacA2c => {
            Box::new(DacAgent::new(DacSettings::from_config(config, algo)?, ns, na, n_options, rng)?)
        }
        Algorithm::AhpPpo => Box::new(AhpAgent::new(AhpSettings::from_config(config)?, ns, na, n_options, rng)?),
        Algorithm::Ppo | Algorithm::A2c => Box::new(FlatAgent::new(FlatSettings::from_config(config, algo)?, ns, na, rng)?),
        Algorithm::Oc => Box::new(OcAgent::new(OcSettings::from_config(config)?, ns, na, n_options, rng)?),
        Algorithm::IopgPosteriorDemo => Box::new(PosteriorDemo::new(&env.mdp, n_options, workers, rng)?),
        Algorithm::Ioq => Box::new(IntraOptionQAgent::new(fixed()?, step_size, config.epsilon, config.off_option, workers)?),
        Algorithm::Smdpq => Box::new(SmdpQAgent::new(fixed()?, step_size, config.epsilon, workers)?),
    })
}
