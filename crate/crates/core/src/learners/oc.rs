//! Option-critic baseline: intra-option policy gradients and termination
//! gradients from an option-value critic, with the master policy
//! epsilon-greedy over that critic and the critic trained towards
//! intra-option Q-learning targets from a periodically refreshed copy.

use rand::{Rng, RngCore};

use super::buffer::{RolloutBuffer, SegmentStep};
use super::config::{Algorithm, LearnerConfig};
use super::policy_grad::{Critic, ValueTarget};
use super::qlearning::epsilon_greedy;
use super::runner::EnvRunner;
use super::Learner;
use crate::error::Result;
use crate::funcapprox::{ActionSpace, Adam, AdamConfig, ArchitectureSpec, Obs, OptionArchitecture, Outcome};
use crate::mdp::sample_categorical;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct OcSettings<T> {
    pub rollout: usize,
    pub n_workers: usize,
    pub epsilon: f64,
    pub entropy: T,
    /// Added to the termination advantage; discourages switching.
    pub switch_penalty: T,
    pub target_refresh: usize,
    pub adam: AdamConfig,
    pub architecture: ArchitectureSpec,
}

impl<T: Real> OcSettings<T> {
    pub fn from_config(config: &LearnerConfig) -> Result<Self> {
        config.validate()?;
        let r = config.resolve(Algorithm::Oc);
        Ok(Self {
            rollout: r.rollout,
            n_workers: r.n_workers,
            epsilon: config.epsilon,
            entropy: T::lit(r.entropy),
            switch_penalty: T::lit(config.switch_penalty.unwrap_or(0.0)),
            target_refresh: config.target_refresh,
            adam: config.adam(),
            architecture: config.architecture.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcStep<T> {
    pub state: usize,
    /// Option held on arrival at `state`; `None` at an episode start.
    pub arrival: Option<usize>,
    pub option: usize,
    pub action: usize,
    pub reward: T,
    pub next_state: usize,
    pub terminated: bool,
    pub cut: bool,
}

impl<T> SegmentStep for OcStep<T> {
    fn is_cut(&self) -> bool {
        self.cut
    }
    fn cut(&mut self) {
        self.cut = true;
    }
}

#[derive(Debug, Clone)]
pub struct OcAgent<T> {
    /// Only the nu and phi sections are used; the master is value-based.
    pub arch: OptionArchitecture<T>,
    /// `Q(s, o)`, one output per option.
    pub critic: Critic<T>,
    target: Critic<T>,
    optimizer: Adam<T>,
    pub settings: OcSettings<T>,
    buffer: RolloutBuffer<OcStep<T>>,
    current: Vec<Option<usize>>,
    updates: usize,
}

impl<T: Real> OcAgent<T> {
    pub fn new<R: Rng + ?Sized>(settings: OcSettings<T>, n_states: usize, n_actions: usize, n_options: usize, rng: &mut R) -> Result<Self> {
        let arch = OptionArchitecture::new(&settings.architecture, n_states, ActionSpace::Discrete(n_actions), n_options, rng)?;
        let critic = Critic::new(&settings.architecture, n_states, n_options, settings.adam, rng)?;
        Ok(Self {
            target: critic.clone(),
            optimizer: Adam::new(settings.adam, arch.n_params()),
            buffer: RolloutBuffer::new(settings.n_workers, settings.rollout),
            current: vec![None; settings.n_workers],
            updates: 0,
            arch,
            critic,
            settings,
        })
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    /// `U(o, s') = (1 - beta_o(s')) Q'(s', o) + beta_o(s') max Q'(s', .)`
    /// under the target critic `Q'`.
    fn arrival_target(&self, o: usize, s: usize) -> Result<T> {
        let q = self.target.values(s)?;
        let beta = self.arch.beta(o, Obs::Index(s))?;
        let max = q.iter().copied().fold(T::neg_infinity(), T::max);
        Ok((T::one() - beta) * q[o] + beta * max)
    }

    /// Value of the epsilon-greedy master: `(1 - eps) max Q + eps mean Q`.
    fn state_value(&self, q: &[T]) -> T {
        let eps = T::lit(self.settings.epsilon);
        let max = q.iter().copied().fold(T::neg_infinity(), T::max);
        let mean = q.iter().copied().sum::<T>() / T::lit(q.len() as f64);
        (T::one() - eps) * max + eps * mean
    }

    fn update(&mut self, gamma: T) -> Result<()> {
        let n = T::lit(self.buffer.len() as f64);
        let mut grad = vec![T::zero(); self.arch.n_params()];
        let mut targets = Vec::with_capacity(self.buffer.len());
        for w in 0..self.buffer.n_workers() {
            let seq = self.buffer.worker(w);
            let mut g = T::zero();
            for t in (0..seq.len()).rev() {
                let x = &seq[t];
                let boot = if x.terminated {
                    T::zero()
                } else if x.cut || t + 1 == seq.len() {
                    self.arrival_target(x.option, x.next_state)?
                } else {
                    g
                };
                g = x.reward + gamma * boot;
                let obs = Obs::Index(x.state);
                let q = self.critic.values(x.state)?;
                let adv = g - q[x.option];
                self.arch.grad_log_intra(x.option, obs, Outcome::Index(x.action), adv / n, &mut grad)?;
                if self.settings.entropy != T::zero() {
                    self.arch.grad_entropy_intra(x.option, obs, self.settings.entropy / n, &mut grad)?;
                }
                if let Some(p) = x.arrival {
                    let term_adv = q[p] - self.state_value(&q) + self.settings.switch_penalty;
                    self.arch.grad_beta(p, obs, -term_adv / n, &mut grad)?;
                }
                targets.push(ValueTarget { state: x.state, output: x.option, target: g });
            }
        }
        grad.iter_mut().for_each(|v| *v = -*v);
        self.optimizer.step(self.arch.params.as_mut_slice(), &grad)?;
        self.critic.step(&targets)?;
        self.updates += 1;
        if self.updates.is_multiple_of(self.settings.target_refresh) {
            self.target = self.critic.clone();
        }
        Ok(())
    }
}

impl<T: Real> Learner<T> for OcAgent<T> {
    fn step(&mut self, runner: &mut EnvRunner<T>, rng: &mut dyn RngCore) -> Result<()> {
        for w in 0..runner.n_workers() {
            if runner.is_fresh(w) {
                self.buffer.cut_last(w);
                self.current[w] = None;
            }
            let s = runner.state(w);
            let obs = Obs::Index(s);
            let arrival = self.current[w];
            let keep = match arrival {
                Some(o) => rng.random::<f64>() >= self.arch.beta(o, obs)?.as_f64(),
                None => false,
            };
            let option = match arrival {
                Some(o) if keep => o,
                _ => epsilon_greedy(&self.critic.values(s)?, self.settings.epsilon, rng),
            };
            let action = sample_categorical(&self.arch.intra_probs(option, obs)?, rng);
            let tr = runner.step(w, action, rng)?;
            self.buffer.push(
                w,
                OcStep {
                    state: s,
                    arrival,
                    option,
                    action,
                    reward: tr.reward,
                    next_state: tr.next_state,
                    terminated: tr.terminated,
                    cut: tr.episode_end(),
                },
            );
            self.current[w] = Some(option);
        }
        if self.buffer.is_full() {
            let result = self.update(runner.gamma());
            self.buffer.clear();
            result?;
        }
        Ok(())
    }

    fn active_option(&self, w: usize) -> Option<usize> {
        self.current.get(w).copied().flatten()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{make_environment, EnvParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(config: &LearnerConfig, env: &str) -> (OcAgent<f64>, EnvRunner<f64>, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let env = make_environment::<f64>(env, &EnvParams::default()).unwrap();
        let (ns, na) = (env.mdp.n_states(), env.mdp.n_actions());
        let settings = OcSettings::from_config(config).unwrap();
        let runner = EnvRunner::new(env, settings.n_workers, &mut rng).unwrap();
        let agent = OcAgent::new(settings, ns, na, 2, &mut rng).unwrap();
        (agent, runner, rng)
    }

    #[test]
    fn master_parameters_never_move() {
        let (mut a, mut r, mut rng) = setup(&LearnerConfig { lr: 0.01, ..Default::default() }, "chain");
        let theta = a.arch.params.theta().to_vec();
        let nu = a.arch.params.nu().to_vec();
        for _ in 0..50 {
            a.step(&mut r, &mut rng).unwrap();
        }
        assert_eq!(a.updates(), 10);
        assert_eq!(a.arch.params.theta(), &theta[..]);
        assert_ne!(a.arch.params.nu(), &nu[..]);
    }

    #[test]
    fn target_critic_refreshes_on_schedule() {
        let (mut a, mut r, mut rng) = setup(&LearnerConfig { target_refresh: 3, lr: 0.01, ..Default::default() }, "two_arm_bandit");
        for _ in 0..10 {
            a.step(&mut r, &mut rng).unwrap();
        }
        assert_eq!(a.updates(), 2);
        assert_ne!(a.target.params, a.critic.params);
        for _ in 0..5 {
            a.step(&mut r, &mut rng).unwrap();
        }
        assert_eq!(a.target.params, a.critic.params);
    }
}
