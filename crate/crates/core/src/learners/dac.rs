//! Double actor-critic: the high MDP (choose `O_t` given `(O_{t-1}, S_t)`)
//! and the low MDP (choose `A_t` given `(S_t, O_t)`) are two ordinary
//! policy-optimisation problems sharing one stream of samples.

use rand::{Rng, RngCore};

use super::buffer::{RolloutBuffer, SegmentStep};
use super::config::{Algorithm, CriticMode, DacSchedule, LearnerConfig};
use super::gae::{gae_with_bootstrap, normalize_advantages};
use super::policy_grad::{a2c_update, ppo_update, Critic, PpoConfig, Scored, StochasticPolicy, ValueTarget};
use super::runner::EnvRunner;
use super::Learner;
use crate::error::{Error, Result};
use crate::funcapprox::{ActionSpace, Adam, AdamConfig, ArchitectureSpec, Obs, OptionArchitecture, Outcome};
use crate::mdp::{sample_categorical, OptionSlot};
use crate::scalar::Real;

/// `(prev, s) -> o`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HighSample {
    pub prev: OptionSlot,
    pub state: usize,
    pub option: usize,
}

/// `(s, o) -> a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LowSample {
    pub state: usize,
    pub option: usize,
    pub action: usize,
}

/// The high-MDP policy `pi_high` as seen by a policy optimiser. Gradients
/// touch theta and the previous option's phi only.
pub struct HighView<'a, T>(pub &'a mut OptionArchitecture<T>);

/// The low-MDP policy `pi_low((s, o), a) = pi_o(a | s)`. Gradients touch nu
/// only.
pub struct LowView<'a, T>(pub &'a mut OptionArchitecture<T>);

impl<T: Real> StochasticPolicy<T> for HighView<'_, T> {
    type Sample = HighSample;

    fn params(&self) -> &[T] {
        self.0.params.as_slice()
    }
    fn params_mut(&mut self) -> &mut [T] {
        self.0.params.as_mut_slice()
    }
    fn log_prob(&self, x: &HighSample) -> Result<T> {
        self.0.log_high(x.prev, Obs::Index(x.state), x.option)
    }
    fn grad_log_prob(&self, x: &HighSample, scale: T, grad: &mut [T]) -> Result<T> {
        self.0.grad_log_high(x.prev, Obs::Index(x.state), x.option, scale, grad)
    }
    fn grad_entropy(&self, x: &HighSample, scale: T, grad: &mut [T]) -> Result<T> {
        self.0.grad_entropy_high(x.prev, Obs::Index(x.state), scale, grad)
    }
}

impl<T: Real> StochasticPolicy<T> for LowView<'_, T> {
    type Sample = LowSample;

    fn params(&self) -> &[T] {
        self.0.params.as_slice()
    }
    fn params_mut(&mut self) -> &mut [T] {
        self.0.params.as_mut_slice()
    }
    fn log_prob(&self, x: &LowSample) -> Result<T> {
        self.0.log_intra(x.option, Obs::Index(x.state), Outcome::Index(x.action))
    }
    fn grad_log_prob(&self, x: &LowSample, scale: T, grad: &mut [T]) -> Result<T> {
        self.0.grad_log_intra(x.option, Obs::Index(x.state), Outcome::Index(x.action), scale, grad)
    }
    fn grad_entropy(&self, x: &LowSample, scale: T, grad: &mut [T]) -> Result<T> {
        self.0.grad_entropy_intra(x.option, Obs::Index(x.state), scale, grad)
    }
}

/// Draws `O_t ~ pi_high(. | prev, s)` then `A_t ~ pi_{O_t}(. | s)`, one
/// uniform draw each. Returns `(o, a, log pi_high, log pi_low)`.
pub fn dac_sample<T: Real, R: Rng + ?Sized>(
    arch: &OptionArchitecture<T>,
    prev: OptionSlot,
    s: usize,
    rng: &mut R,
) -> Result<(usize, usize, T, T)> {
    let high = arch.high_probs(prev, Obs::Index(s))?;
    let o = sample_categorical(&high, rng);
    let low = arch.intra_probs(o, Obs::Index(s))?;
    let a = sample_categorical(&low, rng);
    let log_low = arch.log_intra(o, Obs::Index(s), Outcome::Index(a))?;
    Ok((o, a, high[o].ln(), log_low))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyOptimizer<T> {
    Ppo { clip: T, epochs: usize, minibatch: usize },
    A2c,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DacSettings<T> {
    pub optimizer: PolicyOptimizer<T>,
    pub rollout: usize,
    pub n_workers: usize,
    pub gae_lambda: T,
    pub entropy_high: T,
    pub entropy_low: T,
    pub schedule: DacSchedule,
    pub critic_mode: CriticMode,
    pub freeze_high: bool,
    pub freeze_low: bool,
    pub normalize_advantages: bool,
    pub adam: AdamConfig,
    pub architecture: ArchitectureSpec,
}

impl<T: Real> DacSettings<T> {
    pub fn from_config(config: &LearnerConfig, algo: Algorithm) -> Result<Self> {
        config.validate()?;
        let r = config.resolve(algo);
        let optimizer = match algo {
            Algorithm::DacPpo => {
                PolicyOptimizer::Ppo { clip: T::lit(config.clip), epochs: r.epochs, minibatch: config.minibatch }
            }
            Algorithm::DacA2c => PolicyOptimizer::A2c,
            other => return Err(Error::Config(format!("`{other}` is not a double actor-critic algorithm"))),
        };
        Ok(Self {
            optimizer,
            rollout: r.rollout,
            n_workers: r.n_workers,
            gae_lambda: T::lit(config.gae_lambda),
            entropy_high: T::lit(r.entropy_high),
            entropy_low: T::lit(r.entropy_low),
            schedule: config.dac_schedule,
            critic_mode: config.critic_mode,
            freeze_high: config.freeze_high,
            freeze_low: config.freeze_low,
            normalize_advantages: r.normalize_advantages,
            adam: config.adam(),
            architecture: config.architecture.clone(),
        })
    }
}

/// One step as stored for both MDPs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DacStep<T> {
    pub state: usize,
    pub prev: OptionSlot,
    pub option: usize,
    pub action: usize,
    pub reward: T,
    pub next_state: usize,
    pub terminated: bool,
    pub cut: bool,
    pub log_high: T,
    pub log_low: T,
}

impl<T> SegmentStep for DacStep<T> {
    fn is_cut(&self) -> bool {
        self.cut
    }
    fn cut(&mut self) {
        self.cut = true;
    }
}

/// Advantages and critic targets for one completed rollout.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DacTargets<T> {
    pub adv_high: Vec<T>,
    pub adv_low: Vec<T>,
    pub ret_high: Vec<T>,
    pub ret_low: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct DacAgent<T> {
    pub arch: OptionArchitecture<T>,
    pub low_critic: Critic<T>,
    pub high_critic: Option<Critic<T>>,
    opt_high: Adam<T>,
    opt_low: Adam<T>,
    pub settings: DacSettings<T>,
    buffer: RolloutBuffer<DacStep<T>>,
    prev: Vec<OptionSlot>,
    updates: usize,
}

impl<T: Real> DacAgent<T> {
    pub fn new<R: Rng + ?Sized>(settings: DacSettings<T>, n_states: usize, n_actions: usize, n_options: usize, rng: &mut R) -> Result<Self> {
        let arch = OptionArchitecture::new(&settings.architecture, n_states, ActionSpace::Discrete(n_actions), n_options, rng)?;
        let low_critic = Critic::new(&settings.architecture, n_states, n_options, settings.adam, rng)?;
        let high_critic = match settings.critic_mode {
            CriticMode::Single => None,
            CriticMode::Double => Some(Critic::new(&settings.architecture, n_states, n_options + 1, settings.adam, rng)?),
        };
        let n = arch.n_params();
        Ok(Self {
            opt_high: Adam::new(settings.adam, n),
            opt_low: Adam::new(settings.adam, n),
            buffer: RolloutBuffer::new(settings.n_workers, settings.rollout),
            prev: vec![OptionSlot::Dummy; settings.n_workers],
            updates: 0,
            arch,
            low_critic,
            high_critic,
            settings,
        })
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    pub fn buffer(&self) -> &RolloutBuffer<DacStep<T>> {
        &self.buffer
    }

    /// `sum_o pi_high(o | prev, s) v(s, o)` from the low critic.
    pub fn synthesized_high_value(&self, prev: OptionSlot, s: usize) -> Result<T> {
        let pi = self.arch.high_probs(prev, Obs::Index(s))?;
        let v = self.low_critic.values(s)?;
        Ok(pi.iter().zip(&v).map(|(&p, &x)| p * x).sum())
    }

    fn high_value(&self, prev: OptionSlot, s: usize) -> Result<T> {
        match &self.high_critic {
            Some(c) => c.value(s, prev.slot_index()),
            None => self.synthesized_high_value(prev, s),
        }
    }

    /// GAE for both MDPs over the buffered segment.
    pub fn compute_targets(&self, gamma: T) -> Result<DacTargets<T>> {
        let mut out = DacTargets::default();
        for w in 0..self.buffer.n_workers() {
            let seq = self.buffer.worker(w);
            let n = seq.len();
            let (mut r, mut vh, mut nh, mut vl, mut nl, mut cut) =
                (vec![], vec![], vec![], vec![], vec![], vec![]);
            for (t, x) in seq.iter().enumerate() {
                r.push(x.reward);
                cut.push(x.cut);
                vh.push(self.high_value(x.prev, x.state)?);
                vl.push(self.low_critic.value(x.state, x.option)?);
                if x.terminated {
                    nh.push(T::zero());
                    nl.push(T::zero());
                    continue;
                }
                let arrival = OptionSlot::Real(x.option);
                nh.push(self.high_value(arrival, x.next_state)?);
                // the low successor (s', o') is only known inside the segment
                if t + 1 < n && !x.cut {
                    nl.push(self.low_critic.value(x.next_state, seq[t + 1].option)?);
                } else {
                    nl.push(self.synthesized_high_value(arrival, x.next_state)?);
                }
            }
            let lambda = self.settings.gae_lambda;
            let ah = gae_with_bootstrap(&r, &vh, &nh, &cut, gamma, lambda)?;
            let al = gae_with_bootstrap(&r, &vl, &nl, &cut, gamma, lambda)?;
            out.ret_high.extend(ah.iter().zip(&vh).map(|(&a, &v)| a + v));
            out.ret_low.extend(al.iter().zip(&vl).map(|(&a, &v)| a + v));
            out.adv_high.extend(ah);
            out.adv_low.extend(al);
        }
        Ok(out)
    }

    fn update(&mut self, gamma: T, rng: &mut dyn RngCore) -> Result<()> {
        let mut targets = self.compute_targets(gamma)?;
        if self.settings.normalize_advantages {
            normalize_advantages(&mut targets.adv_high);
            normalize_advantages(&mut targets.adv_low);
        }
        let steps: Vec<DacStep<T>> = self.buffer.iter().copied().collect();
        let high: Vec<Scored<HighSample, T>> = steps
            .iter()
            .zip(&targets.adv_high)
            .map(|(x, &a)| Scored {
                sample: HighSample { prev: x.prev, state: x.state, option: x.option },
                old_log_prob: x.log_high,
                advantage: a,
            })
            .collect();
        let low: Vec<Scored<LowSample, T>> = steps
            .iter()
            .zip(&targets.adv_low)
            .map(|(x, &a)| Scored {
                sample: LowSample { state: x.state, option: x.option, action: x.action },
                old_log_prob: x.log_low,
                advantage: a,
            })
            .collect();
        let alternate = self.settings.schedule == DacSchedule::Alternating;
        let do_high = !self.settings.freeze_high && (!alternate || self.updates.is_multiple_of(2));
        let do_low = !self.settings.freeze_low && (!alternate || self.updates % 2 == 1);
        let critic_epochs = match self.settings.optimizer {
            PolicyOptimizer::Ppo { clip, epochs, minibatch } => {
                if do_high {
                    let cfg = PpoConfig { clip, epochs, minibatch, entropy_coef: self.settings.entropy_high };
                    ppo_update(&mut HighView(&mut self.arch), &mut self.opt_high, &high, &cfg, rng)?;
                }
                if do_low {
                    let cfg = PpoConfig { clip, epochs, minibatch, entropy_coef: self.settings.entropy_low };
                    ppo_update(&mut LowView(&mut self.arch), &mut self.opt_low, &low, &cfg, rng)?;
                }
                Some((epochs, minibatch))
            }
            PolicyOptimizer::A2c => {
                if do_high {
                    a2c_update(&mut HighView(&mut self.arch), &mut self.opt_high, &high, self.settings.entropy_high)?;
                }
                if do_low {
                    a2c_update(&mut LowView(&mut self.arch), &mut self.opt_low, &low, self.settings.entropy_low)?;
                }
                None
            }
        };
        let low_targets: Vec<ValueTarget<T>> = steps
            .iter()
            .zip(&targets.ret_low)
            .map(|(x, &g)| ValueTarget { state: x.state, output: x.option, target: g })
            .collect();
        let high_targets: Vec<ValueTarget<T>> = steps
            .iter()
            .zip(&targets.ret_high)
            .map(|(x, &g)| ValueTarget { state: x.state, output: x.prev.slot_index(), target: g })
            .collect();
        match critic_epochs {
            Some((epochs, minibatch)) => {
                self.low_critic.fit(&low_targets, epochs, minibatch, rng)?;
                if let Some(c) = &mut self.high_critic {
                    c.fit(&high_targets, epochs, minibatch, rng)?;
                }
            }
            None => {
                self.low_critic.step(&low_targets)?;
                if let Some(c) = &mut self.high_critic {
                    c.step(&high_targets)?;
                }
            }
        }
        self.updates += 1;
        Ok(())
    }
}

impl<T: Real> Learner<T> for DacAgent<T> {
    fn step(&mut self, runner: &mut EnvRunner<T>, rng: &mut dyn RngCore) -> Result<()> {
        for w in 0..runner.n_workers() {
            if runner.is_fresh(w) {
                self.buffer.cut_last(w);
                self.prev[w] = OptionSlot::Dummy;
            }
            let s = runner.state(w);
            let (o, a, log_high, log_low) = dac_sample(&self.arch, self.prev[w], s, rng)?;
            let tr = runner.step(w, a, rng)?;
            self.buffer.push(
                w,
                DacStep {
                    state: s,
                    prev: self.prev[w],
                    option: o,
                    action: a,
                    reward: tr.reward,
                    next_state: tr.next_state,
                    terminated: tr.terminated,
                    cut: tr.episode_end(),
                    log_high,
                    log_low,
                },
            );
            self.prev[w] = OptionSlot::Real(o);
        }
        if self.buffer.is_full() {
            let result = self.update(runner.gamma(), rng);
            self.buffer.clear();
            result?;
        }
        Ok(())
    }

    fn active_option(&self, w: usize) -> Option<usize> {
        self.prev.get(w).and_then(|p| p.real())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{make_environment, EnvParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn agent(config: &LearnerConfig, algo: Algorithm, env: &str, n_options: usize, seed: u64) -> (DacAgent<f64>, EnvRunner<f64>, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let env = make_environment::<f64>(env, &EnvParams::default()).unwrap();
        let settings = DacSettings::from_config(config, algo).unwrap();
        let (ns, na) = (env.mdp.n_states(), env.mdp.n_actions());
        let runner = EnvRunner::new(env, settings.n_workers, &mut rng).unwrap();
        let mut a = DacAgent::new(settings, ns, na, n_options, &mut rng).unwrap();
        // move off the symmetric initial point
        for (i, p) in a.arch.params.as_mut_slice().iter_mut().enumerate() {
            *p = (i as f64 * 0.61).sin();
        }
        (a, runner, rng)
    }

    fn run(a: &mut DacAgent<f64>, r: &mut EnvRunner<f64>, rng: &mut ChaCha8Rng, steps: usize) {
        for _ in 0..steps {
            a.step(r, rng).unwrap();
        }
    }

    fn changed(before: &[f64], after: &[f64], range: std::ops::Range<usize>) -> bool {
        range.into_iter().any(|i| before[i] != after[i])
    }

    #[test]
    fn frozen_low_changes_only_master_and_terminations() {
        let config = LearnerConfig { rollout: Some(32), minibatch: 16, freeze_low: true, lr: 0.01, ..Default::default() };
        let (mut a, mut r, mut rng) = agent(&config, Algorithm::DacPpo, "chain", 3, 0);
        let before = a.arch.params.as_slice().to_vec();
        run(&mut a, &mut r, &mut rng, 64);
        let after = a.arch.params.as_slice();
        assert!(!changed(&before, after, a.arch.params.nu_range()));
        assert!(changed(&before, after, a.arch.params.theta_range()));
        assert!(changed(&before, after, a.arch.params.phi_range()));
    }

    #[test]
    fn frozen_high_changes_only_intra_option_policies() {
        let config = LearnerConfig { rollout: Some(32), minibatch: 16, freeze_high: true, lr: 0.01, ..Default::default() };
        let (mut a, mut r, mut rng) = agent(&config, Algorithm::DacPpo, "two_arm_bandit", 3, 1);
        let before = a.arch.params.as_slice().to_vec();
        run(&mut a, &mut r, &mut rng, 64);
        let after = a.arch.params.as_slice();
        assert!(changed(&before, after, a.arch.params.nu_range()));
        assert!(!changed(&before, after, a.arch.params.theta_range()));
        assert!(!changed(&before, after, a.arch.params.phi_range()));
    }

    #[test]
    fn alternating_schedule_updates_one_mdp_per_rollout() {
        let config = LearnerConfig { dac_schedule: DacSchedule::Alternating, lr: 0.01, ..Default::default() };
        let (mut a, mut r, mut rng) = agent(&config, Algorithm::DacA2c, "chain", 2, 2);
        let before = a.arch.params.as_slice().to_vec();
        run(&mut a, &mut r, &mut rng, 5);
        assert_eq!(a.updates(), 1);
        let mid = a.arch.params.as_slice().to_vec();
        assert!(changed(&before, &mid, a.arch.params.theta_range()));
        assert!(!changed(&before, &mid, a.arch.params.nu_range()));
        run(&mut a, &mut r, &mut rng, 5);
        let after = a.arch.params.as_slice();
        assert!(!changed(&mid, after, a.arch.params.theta_range()));
        assert!(changed(&mid, after, a.arch.params.nu_range()));
    }

    #[test]
    fn two_critic_mode_trains_a_high_critic() {
        let config = LearnerConfig { critic_mode: CriticMode::Double, rollout: Some(16), ..Default::default() };
        let (mut a, mut r, mut rng) = agent(&config, Algorithm::DacPpo, "two_arm_bandit", 2, 3);
        let before = a.high_critic.as_ref().unwrap().params.clone();
        run(&mut a, &mut r, &mut rng, 16);
        assert_ne!(a.high_critic.as_ref().unwrap().params, before);
    }

    #[test]
    fn bootstraps_stop_at_terminals_and_synthesize_at_segment_end() {
        let config = LearnerConfig { rollout: Some(3), normalize_advantages: Some(false), ..Default::default() };
        let (mut a, mut r, mut rng) = agent(&config, Algorithm::DacPpo, "two_arm_bandit", 2, 4);
        a.low_critic.params.iter_mut().enumerate().for_each(|(i, p)| *p = i as f64);
        // collect without updating
        for _ in 0..2 {
            a.step(&mut r, &mut rng).unwrap();
        }
        let t = a.compute_targets(0.9).unwrap();
        for (k, x) in a.buffer().iter().enumerate() {
            assert!(x.terminated && x.prev == OptionSlot::Dummy);
            let v = a.low_critic.value(x.state, x.option).unwrap();
            assert!((t.adv_low[k] - (x.reward - v)).abs() < 1e-12);
            let vh = a.synthesized_high_value(OptionSlot::Dummy, x.state).unwrap();
            assert!((t.ret_high[k] - x.reward).abs() < 1e-12 && (t.adv_high[k] - (x.reward - vh)).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_dac_algorithms() {
        assert!(DacSettings::<f64>::from_config(&LearnerConfig::default(), Algorithm::Ppo).is_err());
    }
}
