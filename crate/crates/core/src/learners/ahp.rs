//! Augmented hierarchical policy: one MDP over states `(O_{t-1}, S_t)` and
//! joint actions `(B_t, O_t, A_t)`, where `B_t` decides whether the previous
//! option stops. The master policy only learns from stop decisions.

use rand::{Rng, RngCore};

use super::buffer::{RolloutBuffer, SegmentStep};
use super::config::{Algorithm, LearnerConfig};
use super::dac::PolicyOptimizer;
use super::gae::{gae_with_bootstrap, normalize_advantages};
use super::policy_grad::{a2c_update, ppo_update, Critic, PpoConfig, Scored, StochasticPolicy, ValueTarget};
use super::runner::EnvRunner;
use super::Learner;
use crate::error::{Error, Result};
use crate::funcapprox::{ActionSpace, Adam, AdamConfig, ArchitectureSpec, Obs, OptionArchitecture, Outcome};
use crate::mdp::{sample_categorical, OptionSlot};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Stop,
    Continue,
}

/// `(b, o, a)`; `Continue` must keep the previous option.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AhpDecision {
    pub branch: Branch,
    pub option: usize,
    pub action: usize,
}

fn check_decision(prev: OptionSlot, d: &AhpDecision) -> Result<()> {
    if d.branch == Branch::Continue && prev != OptionSlot::Real(d.option) {
        return Err(Error::InconsistentDecision(format!(
            "continuing from {prev:?} must keep that option, got option {}",
            d.option
        )));
    }
    Ok(())
}

fn termination_log<T: Real>(arch: &OptionArchitecture<T>, p: usize, s: usize, stop: bool) -> Result<T> {
    let phi = &arch.params.as_slice()[arch.phi_range(p)];
    arch.termination_head().log_prob(phi, Obs::Index(s), Outcome::Bool(stop))
}

/// `log pi_o(a|s) + log(1 - beta_prev(s))` for continue,
/// `log pi_o(a|s) + log beta_prev(s) + log pi(o|s)` for stop (with
/// `beta_# = 1`). A continue decision the terminations rule out scores
/// `-inf`.
pub fn ahp_policy_logprob<T: Real>(arch: &OptionArchitecture<T>, prev: OptionSlot, s: usize, d: &AhpDecision) -> Result<T> {
    check_decision(prev, d)?;
    let obs = Obs::Index(s);
    let branch = match (d.branch, prev) {
        (Branch::Continue, OptionSlot::Real(p)) => {
            if arch.beta(p, obs)? >= T::one() {
                return Ok(T::neg_infinity());
            }
            termination_log(arch, p, s, false)?
        }
        (Branch::Stop, _) => {
            let stop = match prev {
                OptionSlot::Real(p) => {
                    if arch.beta(p, obs)? <= T::zero() {
                        return Ok(T::neg_infinity());
                    }
                    termination_log(arch, p, s, true)?
                }
                OptionSlot::Dummy => T::zero(),
            };
            let theta = &arch.params.as_slice()[arch.theta_range()];
            stop + arch.master_head().log_prob(theta, obs, Outcome::Index(d.option))?
        }
        (Branch::Continue, OptionSlot::Dummy) => unreachable!("rejected by check_decision"),
    };
    Ok(branch + arch.log_intra(d.option, obs, Outcome::Index(d.action))?)
}

/// Accumulates `scale * grad log pi_AHP(d | prev, s)`. On a continue decision
/// nothing reaches theta.
pub fn ahp_grad_log_prob<T: Real>(
    arch: &OptionArchitecture<T>,
    prev: OptionSlot,
    s: usize,
    d: &AhpDecision,
    scale: T,
    grad: &mut [T],
) -> Result<T> {
    check_decision(prev, d)?;
    let obs = Obs::Index(s);
    let mut log = T::zero();
    match (d.branch, prev) {
        (Branch::Continue, OptionSlot::Real(p)) => log += arch.grad_log_termination(p, obs, false, scale, grad)?,
        (Branch::Stop, _) => {
            if let OptionSlot::Real(p) = prev {
                log += arch.grad_log_termination(p, obs, true, scale, grad)?;
            }
            log += arch.grad_log_master(obs, d.option, scale, grad)?;
        }
        (Branch::Continue, OptionSlot::Dummy) => unreachable!("rejected by check_decision"),
    }
    log += arch.grad_log_intra(d.option, obs, Outcome::Index(d.action), scale, grad)?;
    Ok(log)
}

/// Entropy of the sampled decision: `H(Bernoulli(beta_prev(s)))`, plus
/// `H(pi(.|s))` when the sample stopped. Accumulates `scale * grad`.
pub fn ahp_grad_decision_entropy<T: Real>(
    arch: &OptionArchitecture<T>,
    prev: OptionSlot,
    s: usize,
    branch: Branch,
    scale: T,
    grad: &mut [T],
) -> Result<T> {
    let obs = Obs::Index(s);
    let mut h = T::zero();
    if let OptionSlot::Real(p) = prev {
        h += arch.grad_entropy_termination(p, obs, scale, grad)?;
    }
    if branch == Branch::Stop {
        h += arch.grad_entropy_master(obs, scale, grad)?;
    }
    Ok(h)
}

/// Draws `b` (one uniform draw unless `prev` is `#`), then `o` if stopping,
/// then `a`. Returns the decision and its log-probability.
pub fn ahp_sample<T: Real, R: Rng + ?Sized>(
    arch: &OptionArchitecture<T>,
    prev: OptionSlot,
    s: usize,
    rng: &mut R,
) -> Result<(AhpDecision, T)> {
    let obs = Obs::Index(s);
    let (branch, option) = match prev {
        OptionSlot::Dummy => (Branch::Stop, sample_categorical(&arch.master_probs(obs)?, rng)),
        OptionSlot::Real(p) => {
            let beta = arch.beta(p, obs)?.as_f64();
            if rng.random::<f64>() < beta {
                (Branch::Stop, sample_categorical(&arch.master_probs(obs)?, rng))
            } else {
                (Branch::Continue, p)
            }
        }
    };
    let action = sample_categorical(&arch.intra_probs(option, obs)?, rng);
    let d = AhpDecision { branch, option, action };
    let log = ahp_policy_logprob(arch, prev, s, &d)?;
    Ok((d, log))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AhpSample {
    pub prev: OptionSlot,
    pub state: usize,
    pub decision: AhpDecision,
}

/// The AHP policy as seen by a policy optimiser; the entropy it reports is
/// `w_decision * H_decision + w_intra * H(pi_o(.|s))`.
pub struct AhpView<'a, T> {
    pub arch: &'a mut OptionArchitecture<T>,
    pub decision_entropy: T,
    pub intra_entropy: T,
}

impl<T: Real> StochasticPolicy<T> for AhpView<'_, T> {
    type Sample = AhpSample;

    fn params(&self) -> &[T] {
        self.arch.params.as_slice()
    }
    fn params_mut(&mut self) -> &mut [T] {
        self.arch.params.as_mut_slice()
    }
    fn log_prob(&self, x: &AhpSample) -> Result<T> {
        ahp_policy_logprob(self.arch, x.prev, x.state, &x.decision)
    }
    fn grad_log_prob(&self, x: &AhpSample, scale: T, grad: &mut [T]) -> Result<T> {
        ahp_grad_log_prob(self.arch, x.prev, x.state, &x.decision, scale, grad)
    }
    fn grad_entropy(&self, x: &AhpSample, scale: T, grad: &mut [T]) -> Result<T> {
        let mut h = T::zero();
        if self.decision_entropy != T::zero() {
            let w = scale * self.decision_entropy;
            h += self.decision_entropy * ahp_grad_decision_entropy(self.arch, x.prev, x.state, x.decision.branch, w, grad)?;
        }
        if self.intra_entropy != T::zero() {
            let w = scale * self.intra_entropy;
            h += self.intra_entropy * self.arch.grad_entropy_intra(x.decision.option, Obs::Index(x.state), w, grad)?;
        }
        Ok(h)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AhpSettings<T> {
    pub optimizer: PolicyOptimizer<T>,
    pub rollout: usize,
    pub n_workers: usize,
    pub gae_lambda: T,
    pub entropy_decision: T,
    pub entropy_intra: T,
    pub normalize_advantages: bool,
    pub adam: AdamConfig,
    pub architecture: ArchitectureSpec,
}

impl<T: Real> AhpSettings<T> {
    pub fn from_config(config: &LearnerConfig) -> Result<Self> {
        config.validate()?;
        let r = config.resolve(Algorithm::AhpPpo);
        Ok(Self {
            optimizer: PolicyOptimizer::Ppo { clip: T::lit(config.clip), epochs: r.epochs, minibatch: config.minibatch },
            rollout: r.rollout,
            n_workers: r.n_workers,
            gae_lambda: T::lit(config.gae_lambda),
            entropy_decision: T::lit(r.entropy_high),
            entropy_intra: T::lit(r.entropy_low),
            normalize_advantages: r.normalize_advantages,
            adam: config.adam(),
            architecture: config.architecture.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AhpStep<T> {
    pub sample: AhpSample,
    pub reward: T,
    pub next_state: usize,
    pub terminated: bool,
    pub cut: bool,
    pub log_prob: T,
}

impl<T> SegmentStep for AhpStep<T> {
    fn is_cut(&self) -> bool {
        self.cut
    }
    fn cut(&mut self) {
        self.cut = true;
    }
}

#[derive(Debug, Clone)]
pub struct AhpAgent<T> {
    pub arch: OptionArchitecture<T>,
    /// `v(prev, s)`, output `prev.slot_index()`.
    pub critic: Critic<T>,
    optimizer: Adam<T>,
    pub settings: AhpSettings<T>,
    buffer: RolloutBuffer<AhpStep<T>>,
    prev: Vec<OptionSlot>,
}

impl<T: Real> AhpAgent<T> {
    pub fn new<R: Rng + ?Sized>(settings: AhpSettings<T>, n_states: usize, n_actions: usize, n_options: usize, rng: &mut R) -> Result<Self> {
        let arch = OptionArchitecture::new(&settings.architecture, n_states, ActionSpace::Discrete(n_actions), n_options, rng)?;
        let critic = Critic::new(&settings.architecture, n_states, n_options + 1, settings.adam, rng)?;
        Ok(Self {
            optimizer: Adam::new(settings.adam, arch.n_params()),
            buffer: RolloutBuffer::new(settings.n_workers, settings.rollout),
            prev: vec![OptionSlot::Dummy; settings.n_workers],
            arch,
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
                v.push(self.critic.value(x.sample.state, x.sample.prev.slot_index())?);
                nv.push(if x.terminated {
                    T::zero()
                } else {
                    self.critic.value(x.next_state, OptionSlot::Real(x.sample.decision.option).slot_index())?
                });
            }
            let a = gae_with_bootstrap(&r, &v, &nv, &cut, gamma, self.settings.gae_lambda)?;
            ret.extend(a.iter().zip(&v).map(|(&a, &v)| a + v));
            adv.extend(a);
        }
        if self.settings.normalize_advantages {
            normalize_advantages(&mut adv);
        }
        let steps: Vec<AhpStep<T>> = self.buffer.iter().copied().collect();
        let batch: Vec<Scored<AhpSample, T>> = steps
            .iter()
            .zip(&adv)
            .map(|(x, &a)| Scored { sample: x.sample, old_log_prob: x.log_prob, advantage: a })
            .collect();
        let targets: Vec<ValueTarget<T>> = steps
            .iter()
            .zip(&ret)
            .map(|(x, &g)| ValueTarget { state: x.sample.state, output: x.sample.prev.slot_index(), target: g })
            .collect();
        let has_entropy = self.settings.entropy_decision != T::zero() || self.settings.entropy_intra != T::zero();
        let coef = if has_entropy { T::one() } else { T::zero() };
        let mut view = AhpView {
            arch: &mut self.arch,
            decision_entropy: self.settings.entropy_decision,
            intra_entropy: self.settings.entropy_intra,
        };
        match self.settings.optimizer {
            PolicyOptimizer::Ppo { clip, epochs, minibatch } => {
                let cfg = PpoConfig { clip, epochs, minibatch, entropy_coef: coef };
                ppo_update(&mut view, &mut self.optimizer, &batch, &cfg, rng)?;
                self.critic.fit(&targets, epochs, minibatch, rng)?;
            }
            PolicyOptimizer::A2c => {
                a2c_update(&mut view, &mut self.optimizer, &batch, coef)?;
                self.critic.step(&targets)?;
            }
        }
        Ok(())
    }
}

impl<T: Real> Learner<T> for AhpAgent<T> {
    fn step(&mut self, runner: &mut EnvRunner<T>, rng: &mut dyn RngCore) -> Result<()> {
        for w in 0..runner.n_workers() {
            if runner.is_fresh(w) {
                self.buffer.cut_last(w);
                self.prev[w] = OptionSlot::Dummy;
            }
            let s = runner.state(w);
            let (decision, log_prob) = ahp_sample(&self.arch, self.prev[w], s, rng)?;
            let tr = runner.step(w, decision.action, rng)?;
            let sample = AhpSample { prev: self.prev[w], state: s, decision };
            self.buffer.push(
                w,
                AhpStep {
                    sample,
                    reward: tr.reward,
                    next_state: tr.next_state,
                    terminated: tr.terminated,
                    cut: tr.episode_end(),
                    log_prob,
                },
            );
            self.prev[w] = OptionSlot::Real(decision.option);
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
    use crate::funcapprox::finite_difference;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn arch(n_states: usize, n_actions: usize, n_options: usize, seed: u64) -> OptionArchitecture<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = OptionArchitecture::new(
            &ArchitectureSpec::default(),
            n_states,
            ActionSpace::Discrete(n_actions),
            n_options,
            &mut rng,
        )
        .unwrap();
        a.params.as_mut_slice().iter_mut().for_each(|p| *p = rng.random_range(-1.5..1.5));
        a
    }

    fn set_beta(a: &mut OptionArchitecture<f64>, o: usize, beta: f64) {
        let r = a.phi_range(o);
        a.params.as_mut_slice()[r].iter_mut().for_each(|z| *z = (beta / (1.0 - beta)).ln());
    }

    #[test]
    fn stop_decision_hand_value() {
        // beta = 0.3, uniform master over two options, pi_o(a|s) = 0.5
        let mut a = arch(1, 2, 2, 0);
        a.params.as_mut_slice().iter_mut().for_each(|p| *p = 0.0);
        set_beta(&mut a, 0, 0.3);
        let d = AhpDecision { branch: Branch::Stop, option: 1, action: 0 };
        let p = ahp_policy_logprob(&a, OptionSlot::Real(0), 0, &d).unwrap().exp();
        assert!((p - 0.075).abs() < 1e-12);
    }

    #[test]
    fn decisions_sum_to_one() {
        let a = arch(3, 3, 3, 1);
        for prev in [OptionSlot::Dummy, OptionSlot::Real(0), OptionSlot::Real(2)] {
            for s in 0..3 {
                let mut total = 0.0;
                for branch in [Branch::Stop, Branch::Continue] {
                    for option in 0..3 {
                        for action in 0..3 {
                            let d = AhpDecision { branch, option, action };
                            if let Ok(lp) = ahp_policy_logprob(&a, prev, s, &d) {
                                total += lp.exp();
                            }
                        }
                    }
                }
                assert!((total - 1.0).abs() < 1e-12, "{prev:?} {s}: {total}");
            }
        }
    }

    #[test]
    fn forced_termination_and_inconsistent_continue() {
        let mut a = arch(1, 2, 2, 2);
        let r = a.phi_range(0);
        a.params.as_mut_slice()[r].iter_mut().for_each(|z| *z = 1e3);
        let keep = AhpDecision { branch: Branch::Continue, option: 0, action: 0 };
        assert_eq!(ahp_policy_logprob(&a, OptionSlot::Real(0), 0, &keep).unwrap(), f64::NEG_INFINITY);
        let switch = AhpDecision { branch: Branch::Continue, option: 1, action: 0 };
        assert!(matches!(ahp_policy_logprob(&a, OptionSlot::Real(0), 0, &switch), Err(Error::InconsistentDecision(_))));
        assert!(matches!(ahp_policy_logprob(&a, OptionSlot::Dummy, 0, &keep), Err(Error::InconsistentDecision(_))));
    }

    #[test]
    fn log_prob_gradient_matches_finite_differences() {
        let a = arch(2, 3, 3, 3);
        let x = a.params.as_slice().to_vec();
        let decisions = [
            (OptionSlot::Real(1), AhpDecision { branch: Branch::Continue, option: 1, action: 2 }),
            (OptionSlot::Real(1), AhpDecision { branch: Branch::Stop, option: 0, action: 1 }),
            (OptionSlot::Dummy, AhpDecision { branch: Branch::Stop, option: 2, action: 0 }),
        ];
        for (prev, d) in decisions {
            let mut g = vec![0.0; x.len()];
            ahp_grad_log_prob(&a, prev, 1, &d, 1.0, &mut g).unwrap();
            let fd = finite_difference(
                |p| {
                    let mut b = a.clone();
                    b.params.as_mut_slice().copy_from_slice(p);
                    ahp_policy_logprob(&b, prev, 1, &d).unwrap()
                },
                &x,
                1e-5,
            );
            let err = g.iter().zip(&fd).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
            assert!(err < 1e-8, "{d:?}: {err}");
            if d.branch == Branch::Continue {
                assert!(g[a.theta_range()].iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn sampled_log_prob_is_consistent() {
        let a = arch(2, 2, 3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut prev = OptionSlot::Dummy;
        for t in 0..200 {
            let s = t % 2;
            let (d, lp) = ahp_sample(&a, prev, s, &mut rng).unwrap();
            assert_eq!(lp, ahp_policy_logprob(&a, prev, s, &d).unwrap());
            assert!(lp.is_finite());
            prev = OptionSlot::Real(d.option);
        }
    }
}
