//! Flat actor-critic on the base MDP, with a PPO or A2C policy optimiser.

use rand::{Rng, RngCore};

use super::buffer::{RolloutBuffer, SegmentStep};
use super::config::{Algorithm, LearnerConfig};
use super::dac::PolicyOptimizer;
use super::gae::{gae_with_bootstrap, normalize_advantages};
use super::policy_grad::{a2c_update, ppo_update, Critic, PpoConfig, Scored, StochasticPolicy, ValueTarget};
use super::runner::EnvRunner;
use super::Learner;
use crate::error::{Error, Result};
use crate::funcapprox::{ActionSpace, Adam, AdamConfig, ArchitectureSpec, Head, Obs, Outcome};
use crate::scalar::Real;

/// Softmax policy over primitive actions.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatPolicy<T> {
    pub head: Head,
    pub params: Vec<T>,
}

impl<T: Real> FlatPolicy<T> {
    pub fn new<R: Rng + ?Sized>(spec: &ArchitectureSpec, n_states: usize, n_actions: usize, rng: &mut R) -> Result<Self> {
        let head = spec.policy_head(n_states, ActionSpace::Discrete(n_actions))?;
        let mut params = vec![T::zero(); head.n_params()];
        head.init(rng, &mut params);
        Ok(Self { head, params })
    }

    pub fn probs(&self, s: usize) -> Result<Vec<T>> {
        self.head.probs(&self.params, Obs::Index(s))
    }
}

impl<T: Real> StochasticPolicy<T> for FlatPolicy<T> {
    type Sample = (usize, usize);

    fn params(&self) -> &[T] {
        &self.params
    }
    fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }
    fn log_prob(&self, &(s, a): &(usize, usize)) -> Result<T> {
        self.head.log_prob(&self.params, Obs::Index(s), Outcome::Index(a))
    }
    fn grad_log_prob(&self, &(s, a): &(usize, usize), scale: T, grad: &mut [T]) -> Result<T> {
        self.head.grad_log_prob(&self.params, Obs::Index(s), Outcome::Index(a), scale, grad)
    }
    fn grad_entropy(&self, &(s, _): &(usize, usize), scale: T, grad: &mut [T]) -> Result<T> {
        self.head.grad_entropy(&self.params, Obs::Index(s), scale, grad)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlatSettings<T> {
    pub optimizer: PolicyOptimizer<T>,
    pub rollout: usize,
    pub n_workers: usize,
    pub gae_lambda: T,
    pub entropy: T,
    pub normalize_advantages: bool,
    pub adam: AdamConfig,
    pub architecture: ArchitectureSpec,
}

impl<T: Real> FlatSettings<T> {
    pub fn from_config(config: &LearnerConfig, algo: Algorithm) -> Result<Self> {
        config.validate()?;
        let r = config.resolve(algo);
        let optimizer = match algo {
            Algorithm::Ppo => PolicyOptimizer::Ppo { clip: T::lit(config.clip), epochs: r.epochs, minibatch: config.minibatch },
            Algorithm::A2c => PolicyOptimizer::A2c,
            other => return Err(Error::Config(format!("`{other}` is not a flat actor-critic algorithm"))),
        };
        Ok(Self {
            optimizer,
            rollout: r.rollout,
            n_workers: r.n_workers,
            gae_lambda: T::lit(config.gae_lambda),
            entropy: T::lit(r.entropy),
            normalize_advantages: r.normalize_advantages,
            adam: config.adam(),
            architecture: config.architecture.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatStep<T> {
    pub state: usize,
    pub action: usize,
    pub reward: T,
    pub next_state: usize,
    pub terminated: bool,
    pub cut: bool,
    pub log_prob: T,
}

impl<T> SegmentStep for FlatStep<T> {
    fn is_cut(&self) -> bool {
        self.cut
    }
    fn cut(&mut self) {
        self.cut = true;
    }
}

#[derive(Debug, Clone)]
pub struct FlatAgent<T> {
    pub policy: FlatPolicy<T>,
    pub critic: Critic<T>,
    optimizer: Adam<T>,
    pub settings: FlatSettings<T>,
    buffer: RolloutBuffer<FlatStep<T>>,
}

impl<T: Real> FlatAgent<T> {
    pub fn new<R: Rng + ?Sized>(settings: FlatSettings<T>, n_states: usize, n_actions: usize, rng: &mut R) -> Result<Self> {
        let policy = FlatPolicy::new(&settings.architecture, n_states, n_actions, rng)?;
        let critic = Critic::new(&settings.architecture, n_states, 1, settings.adam, rng)?;
        Ok(Self {
            optimizer: Adam::new(settings.adam, policy.params.len()),
            buffer: RolloutBuffer::new(settings.n_workers, settings.rollout),
            policy,
            critic,
            settings,
        })
    }

    fn update(&mut self, gamma: T, rng: &mut dyn RngCore) -> Result<()> {
        let mut adv = Vec::new();
        let mut ret = Vec::new();
        for w in 0..self.buffer.n_workers() {
            let seq = self.buffer.worker(w);
            let (mut r, mut v, mut nv, mut cut) = (vec![], vec![], vec![], vec![]);
            for x in seq {
                r.push(x.reward);
                cut.push(x.cut);
                v.push(self.critic.value(x.state, 0)?);
                nv.push(if x.terminated { T::zero() } else { self.critic.value(x.next_state, 0)? });
            }
            let a = gae_with_bootstrap(&r, &v, &nv, &cut, gamma, self.settings.gae_lambda)?;
            ret.extend(a.iter().zip(&v).map(|(&a, &v)| a + v));
            adv.extend(a);
        }
        if self.settings.normalize_advantages {
            normalize_advantages(&mut adv);
        }
        let steps: Vec<FlatStep<T>> = self.buffer.iter().copied().collect();
        let batch: Vec<Scored<(usize, usize), T>> = steps
            .iter()
            .zip(&adv)
            .map(|(x, &a)| Scored { sample: (x.state, x.action), old_log_prob: x.log_prob, advantage: a })
            .collect();
        let targets: Vec<ValueTarget<T>> =
            steps.iter().zip(&ret).map(|(x, &g)| ValueTarget { state: x.state, output: 0, target: g }).collect();
        match self.settings.optimizer {
            PolicyOptimizer::Ppo { clip, epochs, minibatch } => {
                let cfg = PpoConfig { clip, epochs, minibatch, entropy_coef: self.settings.entropy };
                ppo_update(&mut self.policy, &mut self.optimizer, &batch, &cfg, rng)?;
                self.critic.fit(&targets, epochs, minibatch, rng)?;
            }
            PolicyOptimizer::A2c => {
                a2c_update(&mut self.policy, &mut self.optimizer, &batch, self.settings.entropy)?;
                self.critic.step(&targets)?;
            }
        }
        Ok(())
    }
}

impl<T: Real> Learner<T> for FlatAgent<T> {
    fn step(&mut self, runner: &mut EnvRunner<T>, rng: &mut dyn RngCore) -> Result<()> {
        for w in 0..runner.n_workers() {
            if runner.is_fresh(w) {
                self.buffer.cut_last(w);
            }
            let s = runner.state(w);
            let pi = self.policy.probs(s)?;
            let a = crate::mdp::sample_categorical(&pi, rng);
            let tr = runner.step(w, a, rng)?;
            self.buffer.push(
                w,
                FlatStep {
                    state: s,
                    action: a,
                    reward: tr.reward,
                    next_state: tr.next_state,
                    terminated: tr.terminated,
                    cut: tr.episode_end(),
                    log_prob: self.policy.log_prob(&(s, a))?,
                },
            );
        }
        if self.buffer.is_full() {
            let result = self.update(runner.gamma(), rng);
            self.buffer.clear();
            result?;
        }
        Ok(())
    }

    fn active_option(&self, _w: usize) -> Option<usize> {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{make_environment, EnvParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ppo_prefers_the_paying_arm() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let env = make_environment::<f64>("two_arm_bandit", &EnvParams::default()).unwrap();
        let config = LearnerConfig { lr: 0.01, rollout: Some(256), ..Default::default() };
        let settings = FlatSettings::from_config(&config, Algorithm::Ppo).unwrap();
        let mut agent = FlatAgent::new(settings, 2, 2, &mut rng).unwrap();
        let mut runner = EnvRunner::new(env, 1, &mut rng).unwrap();
        for _ in 0..2048 {
            agent.step(&mut runner, &mut rng).unwrap();
        }
        assert!(agent.policy.probs(0).unwrap()[0] > 0.9);
    }
}
