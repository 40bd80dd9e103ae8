//! Lock-step workers over one environment, with episode bookkeeping.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::mdp::{Environment, FiniteMdp};
use crate::scalar::Real;

/// One environment transition of one worker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition<T> {
    pub state: usize,
    pub action: usize,
    pub reward: T,
    pub next_state: usize,
    /// `next_state` is terminal: bootstrap zero.
    pub terminated: bool,
    /// The step cap ended the episode at a live state.
    pub truncated: bool,
}

impl<T> Transition<T> {
    pub fn episode_end(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// A finished (or interrupted) episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord<T> {
    pub worker: usize,
    /// Undiscounted sum of rewards.
    pub ret: T,
    pub length: usize,
    pub terminated: bool,
    /// Total environment steps across workers when the episode ended.
    pub end_step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvRunner<T> {
    env: Environment<T>,
    states: Vec<usize>,
    lengths: Vec<usize>,
    returns: Vec<T>,
    fresh: Vec<bool>,
    finished: Vec<EpisodeRecord<T>>,
    total_steps: u64,
}

impl<T: Real> EnvRunner<T> {
    /// Starts `n_workers` episodes, drawing initial states in worker order.
    pub fn new(env: Environment<T>, n_workers: usize, rng: &mut dyn RngCore) -> Result<Self> {
        if n_workers == 0 {
            return Err(Error::Config("need at least one worker".into()));
        }
        let states = (0..n_workers).map(|_| env.mdp.sample_initial(rng)).collect();
        Ok(Self {
            env,
            states,
            lengths: vec![0; n_workers],
            returns: vec![T::zero(); n_workers],
            fresh: vec![true; n_workers],
            finished: Vec::new(),
            total_steps: 0,
        })
    }

    pub fn env(&self) -> &Environment<T> {
        &self.env
    }

    pub fn n_workers(&self) -> usize {
        self.states.len()
    }

    pub fn gamma(&self) -> T {
        self.env.mdp.gamma()
    }

    pub fn state(&self, w: usize) -> usize {
        self.states[w]
    }

    /// True until the worker's current episode takes its first step.
    pub fn is_fresh(&self, w: usize) -> bool {
        self.fresh[w]
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    pub fn step(&mut self, w: usize, action: usize, rng: &mut dyn RngCore) -> Result<Transition<T>> {
        Error::check_index("worker", w, self.n_workers())?;
        Error::check_index("action", action, self.env.mdp.n_actions())?;
        let s = self.states[w];
        let reward = self.env.mdp.reward(s, action);
        let next = self.env.mdp.sample_next(s, action, rng);
        self.total_steps += 1;
        self.lengths[w] += 1;
        self.returns[w] += reward;
        self.fresh[w] = false;
        let terminated = self.env.mdp.is_terminal(next);
        let truncated = !terminated && self.lengths[w] >= self.env.max_episode_steps;
        let tr = Transition { state: s, action, reward, next_state: next, terminated, truncated };
        if tr.episode_end() {
            self.finish(w, terminated);
            self.states[w] = self.env.mdp.sample_initial(rng);
        } else {
            self.states[w] = next;
        }
        Ok(tr)
    }

    fn finish(&mut self, w: usize, terminated: bool) {
        self.finished.push(EpisodeRecord {
            worker: w,
            ret: self.returns[w],
            length: self.lengths[w],
            terminated,
            end_step: self.total_steps,
        });
        self.lengths[w] = 0;
        self.returns[w] = T::zero();
        self.fresh[w] = true;
    }

    /// Swaps the environment. Episodes in progress end here and are logged
    /// as they stand; every worker restarts in the new environment. Learners
    /// see the restart through [`is_fresh`](Self::is_fresh).
    pub fn switch_env(&mut self, env: Environment<T>, rng: &mut dyn RngCore) -> Result<()> {
        if env.mdp.n_states() != self.env.mdp.n_states() || env.mdp.n_actions() != self.env.mdp.n_actions() {
            return Err(Error::Config(format!(
                "cannot switch from `{}` to `{}`: state or action spaces differ",
                self.env.name, env.name
            )));
        }
        for w in 0..self.n_workers() {
            if self.lengths[w] > 0 {
                self.finish(w, false);
            }
        }
        self.env = env;
        for w in 0..self.n_workers() {
            self.states[w] = self.env.mdp.sample_initial(rng);
            self.fresh[w] = true;
        }
        Ok(())
    }

    /// Episodes finished since the last call.
    pub fn drain_episodes(&mut self) -> Vec<EpisodeRecord<T>> {
        std::mem::take(&mut self.finished)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{make_environment, EnvParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bandit_episodes_last_one_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let env = make_environment::<f64>("two_arm_bandit", &EnvParams::default()).unwrap();
        let mut r = EnvRunner::new(env, 2, &mut rng).unwrap();
        let t = r.step(0, 0, &mut rng).unwrap();
        assert!(t.terminated);
        assert_eq!(t.reward, 1.0);
        assert!(r.is_fresh(0));
        r.step(1, 1, &mut rng).unwrap();
        let eps = r.drain_episodes();
        assert_eq!(eps.len(), 2);
        assert_eq!((eps[0].ret, eps[1].ret), (1.0, 0.0));
        assert_eq!(eps[1].end_step, 2);
        assert!(r.drain_episodes().is_empty());
    }

    #[test]
    fn step_cap_truncates() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let params = EnvParams { max_episode_steps: Some(3), ..Default::default() };
        let env = make_environment::<f64>("chain", &params).unwrap();
        let mut r = EnvRunner::new(env, 1, &mut rng).unwrap();
        let ends: Vec<bool> = (0..3).map(|_| r.step(0, 0, &mut rng).unwrap().truncated).collect();
        assert_eq!(ends, vec![false, false, true]);
        assert_eq!(r.drain_episodes()[0].length, 3);
    }

    #[test]
    fn switch_ends_running_episodes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = make_environment::<f64>("four_rooms", &EnvParams::default()).unwrap();
        let b = make_environment::<f64>("four_rooms_goal_b", &EnvParams::default()).unwrap();
        let mut r = EnvRunner::new(a, 1, &mut rng).unwrap();
        r.step(0, 1, &mut rng).unwrap();
        r.switch_env(b, &mut rng).unwrap();
        let eps = r.drain_episodes();
        assert_eq!(eps.len(), 1);
        assert!(!eps[0].terminated);
        assert!(r.is_fresh(0));
        assert_eq!(r.env().name, "four_rooms_goal_b");
        let chain = make_environment::<f64>("chain", &EnvParams::default()).unwrap();
        assert!(r.switch_env(chain, &mut rng).is_err());
    }
}
