//! Exhaustive trajectory enumeration and exact trajectory probabilities on
//! the base chain and on both augmented chains.
//!
//! A trajectory stops at a terminal state or after `horizon` transitions, so
//! the enumerated probabilities of a chain always sum to one.

use crate::augmented::{
    build_high_mdp, build_low_mdp, HighMdp, HighPolicy, HighTrajectory, LowMdp, LowPolicy, LowTrajectory,
};
use crate::error::{Error, Result};
use crate::mdp::{FiniteMdp, OptionModel, OptionSlot, OptionTrajectory, PolicyTable, Trajectory};
use crate::scalar::Real;

/// One trajectory of a Markov chain induced by a Markov policy on a finite
/// MDP, with its probability.
#[derive(Debug, Clone, PartialEq)]
pub struct EnumeratedPath<T> {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<T>,
    pub terminated: bool,
    pub prob: T,
}

/// Every positive-probability trajectory of `policy` on `mdp` up to `horizon`
/// transitions.
pub fn enumerate_chain<T: Real, M: FiniteMdp<T>>(
    mdp: &M,
    policy: &PolicyTable<T>,
    horizon: usize,
) -> Vec<EnumeratedPath<T>> {
    fn walk<T: Real, M: FiniteMdp<T>>(
        mdp: &M,
        policy: &PolicyTable<T>,
        horizon: usize,
        path: &mut EnumeratedPath<T>,
        out: &mut Vec<EnumeratedPath<T>>,
    ) {
        let s = *path.states.last().unwrap();
        if mdp.is_terminal(s) || path.actions.len() == horizon {
            let mut done = path.clone();
            done.terminated = mdp.is_terminal(s);
            out.push(done);
            return;
        }
        for (a, &pa) in policy.row(s).iter().enumerate() {
            if pa == T::zero() {
                continue;
            }
            for (next, &pn) in mdp.transition_row(s, a).iter().enumerate() {
                if pn == T::zero() {
                    continue;
                }
                let saved = path.prob;
                path.prob = saved * pa * pn;
                path.states.push(next);
                path.actions.push(a);
                path.rewards.push(mdp.reward(s, a));
                walk(mdp, policy, horizon, path, out);
                path.states.pop();
                path.actions.pop();
                path.rewards.pop();
                path.prob = saved;
            }
        }
    }

    let mut out = Vec::new();
    for (s0, &p0) in mdp.initial().iter().enumerate() {
        if p0 == T::zero() {
            continue;
        }
        let mut path = EnumeratedPath {
            states: vec![s0],
            actions: Vec::new(),
            rewards: Vec::new(),
            terminated: false,
            prob: p0,
        };
        walk(mdp, policy, horizon, &mut path, &mut out);
    }
    out
}

/// Every positive-probability `(S, O, A)` trajectory of the call-and-return
/// process up to `horizon` transitions.
pub fn enumerate_base<T: Real>(model: &OptionModel<T>, horizon: usize) -> Vec<(Trajectory<T>, T)> {
    fn walk<T: Real>(
        model: &OptionModel<T>,
        horizon: usize,
        traj: &mut Trajectory<T>,
        prob: T,
        out: &mut Vec<(Trajectory<T>, T)>,
    ) {
        let s = *traj.states.last().unwrap();
        let terminal = model.mdp.terminal_mask()[s];
        if terminal || traj.actions.len() == horizon {
            let mut done = traj.clone();
            done.terminated = terminal;
            out.push((done, prob));
            return;
        }
        let prev = traj.options.last().map_or(OptionSlot::Dummy, |&o| OptionSlot::Real(o));
        let kernel = model.option_kernel_unchecked(s, prev);
        for (o, &po) in kernel.iter().enumerate() {
            if po == T::zero() {
                continue;
            }
            for a in 0..model.n_actions() {
                let pa = model.options.pi(o, s, a);
                if pa == T::zero() {
                    continue;
                }
                for (next, &pn) in model.mdp.transition_row(s, a).iter().enumerate() {
                    if pn == T::zero() {
                        continue;
                    }
                    traj.states.push(next);
                    traj.options.push(o);
                    traj.actions.push(a);
                    traj.rewards.push(model.mdp.reward(s, a));
                    walk(model, horizon, traj, prob * po * pa * pn, out);
                    traj.states.pop();
                    traj.options.pop();
                    traj.actions.pop();
                    traj.rewards.pop();
                }
            }
        }
    }

    let mut out = Vec::new();
    for (s0, &p0) in model.mdp.initial().iter().enumerate() {
        if p0 == T::zero() {
            continue;
        }
        let mut traj = Trajectory {
            states: vec![s0],
            options: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            terminated: false,
        };
        walk(model, horizon, &mut traj, p0, &mut out);
    }
    out
}

/// Every positive-probability `(S, O)` trajectory up to `horizon`
/// transitions. Rewards are the expected option rewards `r(s, o)`.
pub fn enumerate_base_options<T: Real>(model: &OptionModel<T>, horizon: usize) -> Vec<(OptionTrajectory<T>, T)> {
    let ns = model.n_states();
    let kernels: Vec<(Vec<T>, T)> = (0..ns)
        .flat_map(|s| (0..model.n_options()).map(move |o| (s, o)))
        .map(|(s, o)| model.state_option_kernel(s, o).expect("indices in range"))
        .collect();
    let no = model.n_options();

    #[allow(clippy::too_many_arguments)]
    fn walk<T: Real>(
        model: &OptionModel<T>,
        kernels: &[(Vec<T>, T)],
        no: usize,
        horizon: usize,
        traj: &mut OptionTrajectory<T>,
        prob: T,
        out: &mut Vec<(OptionTrajectory<T>, T)>,
    ) {
        let s = *traj.states.last().unwrap();
        let terminal = model.mdp.terminal_mask()[s];
        if terminal || traj.options.len() == horizon {
            let mut done = traj.clone();
            done.terminated = terminal;
            out.push((done, prob));
            return;
        }
        let prev = traj.options.last().map_or(OptionSlot::Dummy, |&o| OptionSlot::Real(o));
        for (o, &po) in model.option_kernel_unchecked(s, prev).iter().enumerate() {
            if po == T::zero() {
                continue;
            }
            let (row, r) = &kernels[s * no + o];
            for (next, &pn) in row.iter().enumerate() {
                if pn == T::zero() {
                    continue;
                }
                traj.states.push(next);
                traj.options.push(o);
                traj.rewards.push(*r);
                walk(model, kernels, no, horizon, traj, prob * po * pn, out);
                traj.states.pop();
                traj.options.pop();
                traj.rewards.pop();
            }
        }
    }

    let mut out = Vec::new();
    for (s0, &p0) in model.mdp.initial().iter().enumerate() {
        if p0 == T::zero() {
            continue;
        }
        let mut traj = OptionTrajectory { states: vec![s0], options: Vec::new(), rewards: Vec::new(), terminated: false };
        walk(model, &kernels, no, horizon, &mut traj, p0, &mut out);
    }
    out
}

/// A trajectory on one of the chains whose probability can be evaluated.
#[derive(Debug, Clone, Copy)]
pub enum ChainTrajectory<'a, T> {
    /// `(S, O, A)` under call-and-return execution.
    Base(&'a Trajectory<T>),
    /// `(S, O)` under call-and-return execution, actions marginalised.
    BaseOptions(&'a OptionTrajectory<T>),
    High(&'a HighTrajectory<T>),
    Low(&'a LowTrajectory<T>),
}

/// An option model with both augmented MDPs and their policies built.
#[derive(Debug, Clone)]
pub struct Chains<T> {
    pub model: OptionModel<T>,
    pub high: HighMdp<T>,
    pub high_policy: HighPolicy<T>,
    pub low: LowMdp<T>,
    pub low_policy: LowPolicy<T>,
}

impl<T: Real> Chains<T> {
    pub fn new(model: OptionModel<T>) -> Result<Self> {
        let high = build_high_mdp(&model.mdp, &model.options)?;
        let high_policy = HighPolicy::new(&model)?;
        let low = build_low_mdp(&model.mdp, &model.options, &model.master)?;
        let low_policy = LowPolicy::new(&model.options)?;
        Ok(Self { model, high, high_policy, low, low_policy })
    }

    fn check_state(&self, s: usize) -> Result<()> {
        Error::check_index("state", s, self.model.n_states())
    }

    fn check_option(&self, o: usize) -> Result<()> {
        Error::check_index("option", o, self.model.n_options())
    }

    fn check_action(&self, a: usize) -> Result<()> {
        Error::check_index("action", a, self.model.n_actions())
    }

    /// Product of the initial, policy and transition factors of the chosen
    /// chain. Steps with zero probability give 0; malformed input (bad
    /// indices, inconsistent lengths) is an error.
    pub fn trajectory_probability(&self, traj: ChainTrajectory<'_, T>) -> Result<T> {
        match traj {
            ChainTrajectory::Base(t) => self.base_probability(t),
            ChainTrajectory::BaseOptions(t) => self.base_options_probability(t),
            ChainTrajectory::High(t) => self.high_probability(t),
            ChainTrajectory::Low(t) => self.low_probability(t),
        }
    }

    fn base_probability(&self, t: &Trajectory<T>) -> Result<T> {
        if !t.is_consistent() {
            return Err(Error::InvalidModel("trajectory has inconsistent lengths".into()));
        }
        let m = &self.model;
        t.states.iter().try_for_each(|&s| self.check_state(s))?;
        t.options.iter().try_for_each(|&o| self.check_option(o))?;
        t.actions.iter().try_for_each(|&a| self.check_action(a))?;
        let mut p = m.mdp.initial()[t.states[0]];
        let mut prev = OptionSlot::Dummy;
        for k in 0..t.len() {
            let (s, o, a) = (t.states[k], t.options[k], t.actions[k]);
            p *= m.option_kernel_unchecked(s, prev)[o]
                * m.options.pi(o, s, a)
                * m.mdp.transition_row(s, a)[t.states[k + 1]];
            prev = OptionSlot::Real(o);
        }
        Ok(p)
    }

    fn base_options_probability(&self, t: &OptionTrajectory<T>) -> Result<T> {
        let n = t.states.len();
        if n == 0 || t.options.len() + 1 != n {
            return Err(Error::InvalidModel("trajectory has inconsistent lengths".into()));
        }
        let m = &self.model;
        t.states.iter().try_for_each(|&s| self.check_state(s))?;
        t.options.iter().try_for_each(|&o| self.check_option(o))?;
        let mut p = m.mdp.initial()[t.states[0]];
        let mut prev = OptionSlot::Dummy;
        for k in 0..t.options.len() {
            let (s, o) = (t.states[k], t.options[k]);
            let (row, _) = m.state_option_kernel(s, o)?;
            p *= m.option_kernel_unchecked(s, prev)[o] * row[t.states[k + 1]];
            prev = OptionSlot::Real(o);
        }
        Ok(p)
    }

    fn high_probability(&self, t: &HighTrajectory<T>) -> Result<T> {
        let n = t.states.len();
        if n == 0 || t.actions.len() + 1 != n {
            return Err(Error::InvalidModel("high trajectory has inconsistent lengths".into()));
        }
        for &(slot, s) in &t.states {
            self.check_state(s)?;
            if let OptionSlot::Real(o) = slot {
                self.check_option(o)?;
            }
        }
        t.actions.iter().try_for_each(|&o| self.check_option(o))?;
        let idx = |(slot, s): (OptionSlot, usize)| self.high.index(slot, s);
        let mut p = self.high.initial()[idx(t.states[0])];
        for k in 0..t.actions.len() {
            let (slot, s) = t.states[k];
            let a = t.actions[k];
            p *= self.high_policy.prob(slot, s, a) * self.high.transition_row(idx(t.states[k]), a)[idx(t.states[k + 1])];
        }
        Ok(p)
    }

    fn low_probability(&self, t: &LowTrajectory<T>) -> Result<T> {
        let n = t.states.len();
        if t.actions.len() != n || t.rewards.len() != n {
            return Err(Error::InvalidModel("low trajectory has inconsistent lengths".into()));
        }
        for &(s, o) in &t.states {
            self.check_state(s)?;
            self.check_option(o)?;
        }
        self.check_state(t.final_state)?;
        t.actions.iter().try_for_each(|&a| self.check_action(a))?;
        let no = self.model.n_options();
        let init = self.low.initial();
        let Some(&first) = t.states.first() else {
            // the option at S_0 was never drawn: marginalise it
            return Ok((0..no).map(|o| init[self.low.index(t.final_state, o)]).sum());
        };
        let mut p = init[self.low.index(first.0, first.1)];
        for k in 0..n {
            let (s, o) = t.states[k];
            let a = t.actions[k];
            let row = self.low.transition_row(self.low.index(s, o), a);
            let step = match t.states.get(k + 1) {
                Some(&(s2, o2)) => row[self.low.index(s2, o2)],
                None => (0..no).map(|o2| row[self.low.index(t.final_state, o2)]).sum(),
            };
            p *= self.low_policy.prob(s, o, a) * step;
        }
        Ok(p)
    }
}

/// Horizon-truncated expected discounted return computed by enumeration.
pub fn expected_return<T: Real>(paths: impl IntoIterator<Item = (T, T)>) -> T {
    paths.into_iter().map(|(prob, ret)| prob * ret).sum()
}

/// The truncated return `J` computed on each chain by independent
/// enumeration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnOnChains<T> {
    pub base: T,
    pub high: T,
    pub low: T,
}

impl<T: Real> ReturnOnChains<T> {
    pub fn max_gap(&self) -> T {
        (self.base - self.high).abs().max((self.base - self.low).abs())
    }
}

pub fn return_on_chains<T: Real>(chains: &Chains<T>, horizon: usize) -> ReturnOnChains<T> {
    let gamma = chains.model.mdp.gamma();
    let ret = |rewards: &[T]| crate::mdp::discounted_sum(rewards, gamma);
    let base = expected_return(enumerate_base(&chains.model, horizon).iter().map(|(t, p)| (*p, ret(&t.rewards))));
    let high = expected_return(
        enumerate_chain(&chains.high, chains.high_policy.table(), horizon).iter().map(|e| (e.prob, ret(&e.rewards))),
    );
    let low = expected_return(
        enumerate_chain(&chains.low, chains.low_policy.table(), horizon).iter().map(|e| (e.prob, ret(&e.rewards))),
    );
    ReturnOnChains { base, high, low }
}
