//! Value-based learners over a fixed option set: intra-option Q-learning and
//! SMDP Q-learning, both with an epsilon-greedy master.

use rand::{Rng, RngCore};

use super::qlearning::{QTable, StepSize};
use super::runner::EnvRunner;
use super::Learner;
use crate::error::Result;
use crate::mdp::{sample_categorical, OptionSet, OptionSlot};
use crate::scalar::Real;

fn choose<T: Real>(q: &QTable<T>, options: &OptionSet<T>, current: Option<usize>, s: usize, rng: &mut dyn RngCore) -> (usize, bool) {
    if let Some(o) = current {
        let beta = options.beta(OptionSlot::Real(o), s).as_f64();
        if rng.random::<f64>() >= beta {
            return (o, false);
        }
    }
    (q.epsilon_greedy(s, rng), true)
}

/// Intra-option Q-learning: every step updates the executing option or,
/// off-option, every option consistent with the action taken.
#[derive(Debug, Clone)]
pub struct IntraOptionQAgent<T> {
    pub q: QTable<T>,
    pub options: OptionSet<T>,
    pub off_option: bool,
    current: Vec<Option<usize>>,
}

impl<T: Real> IntraOptionQAgent<T> {
    pub fn new(options: OptionSet<T>, step_size: StepSize, epsilon: f64, off_option: bool, n_workers: usize) -> Result<Self> {
        let q = QTable::new(options.n_states(), options.len(), step_size, epsilon)?;
        Ok(Self { q, options, off_option, current: vec![None; n_workers] })
    }
}

impl<T: Real> Learner<T> for IntraOptionQAgent<T> {
    fn step(&mut self, runner: &mut EnvRunner<T>, rng: &mut dyn RngCore) -> Result<()> {
        let gamma = runner.gamma();
        for w in 0..runner.n_workers() {
            if runner.is_fresh(w) {
                self.current[w] = None;
            }
            let s = runner.state(w);
            let (o, _) = choose(&self.q, &self.options, self.current[w], s, rng);
            let a = sample_categorical(self.options.get(o)?.pi().row(s), rng);
            let tr = runner.step(w, a, rng)?;
            if self.off_option {
                self.q.off_option_q_update(&self.options, s, a, tr.reward, tr.next_state, gamma, tr.terminated)?;
            } else {
                self.q.intra_option_q_update(&self.options, s, o, tr.reward, tr.next_state, gamma, tr.terminated);
            }
            self.current[w] = Some(o);
        }
        Ok(())
    }

    fn active_option(&self, w: usize) -> Option<usize> {
        self.current.get(w).copied().flatten()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Pending<T> {
    start: usize,
    option: usize,
    ret: T,
    discount: T,
    duration: u32,
}

/// SMDP Q-learning: one update per completed option execution.
#[derive(Debug, Clone)]
pub struct SmdpQAgent<T> {
    pub q: QTable<T>,
    pub options: OptionSet<T>,
    pending: Vec<Option<Pending<T>>>,
    last_state: Vec<usize>,
    active: Vec<Option<usize>>,
}

impl<T: Real> SmdpQAgent<T> {
    pub fn new(options: OptionSet<T>, step_size: StepSize, epsilon: f64, n_workers: usize) -> Result<Self> {
        let q = QTable::new(options.n_states(), options.len(), step_size, epsilon)?;
        Ok(Self { q, options, pending: vec![None; n_workers], last_state: vec![0; n_workers], active: vec![None; n_workers] })
    }

    fn flush(&mut self, w: usize, end: usize, terminal: bool, gamma: T) {
        if let Some(p) = self.pending[w].take() {
            self.q.smdp_q_update(p.start, p.option, p.ret, end, p.duration, gamma, terminal);
        }
    }
}

impl<T: Real> Learner<T> for SmdpQAgent<T> {
    fn step(&mut self, runner: &mut EnvRunner<T>, rng: &mut dyn RngCore) -> Result<()> {
        let gamma = runner.gamma();
        for w in 0..runner.n_workers() {
            if runner.is_fresh(w) {
                // an interrupted execution ends where the old episode stopped
                let end = self.last_state[w];
                self.flush(w, end, false, gamma);
            }
            let s = runner.state(w);
            let (o, fresh_option) = choose(&self.q, &self.options, self.pending[w].map(|p| p.option), s, rng);
            if fresh_option {
                self.flush(w, s, false, gamma);
                self.pending[w] = Some(Pending { start: s, option: o, ret: T::zero(), discount: T::one(), duration: 0 });
            }
            let a = sample_categorical(self.options.get(o)?.pi().row(s), rng);
            let tr = runner.step(w, a, rng)?;
            if let Some(p) = &mut self.pending[w] {
                p.ret += p.discount * tr.reward;
                p.discount *= gamma;
                p.duration += 1;
            }
            self.last_state[w] = tr.next_state;
            self.active[w] = Some(o);
            if tr.episode_end() {
                self.flush(w, tr.next_state, tr.terminated, gamma);
            }
        }
        Ok(())
    }

    fn active_option(&self, w: usize) -> Option<usize> {
        self.active.get(w).copied().flatten()
    }
}
