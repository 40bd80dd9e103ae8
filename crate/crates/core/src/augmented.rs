//! The two augmented MDPs induced by an option model.
//!
//! * High MDP: states `(o_prev, s)` over `O+ x S`, actions are options. Its
//!   policy embeds the master policy and the terminations.
//! * Low MDP: states `(s, o)` over `S x O`, actions are primitive actions. Its
//!   policy is the intra-option policy of the held option.
//!
//! Index conventions: a high state `(slot, s)` lives at
//! `slot.slot_index() * |S| + s` (so `#` occupies the first `|S|` rows), a low
//! state `(s, o)` lives at `o * |S| + s`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::{
    FiniteMdp, MasterPolicy, OptionModel, OptionSet, OptionSlot, OptionTrajectory, PolicyTable,
    TabularMdp, Trajectory,
};
use crate::scalar::Real;

#[inline]
pub fn high_index(n_states: usize, slot: OptionSlot, s: usize) -> usize {
    slot.slot_index() * n_states + s
}

#[inline]
pub fn high_pair(n_states: usize, index: usize) -> (OptionSlot, usize) {
    (OptionSlot::from_slot_index(index / n_states), index % n_states)
}

#[inline]
pub fn low_index(n_states: usize, s: usize, o: usize) -> usize {
    o * n_states + s
}

#[inline]
pub fn low_pair(n_states: usize, index: usize) -> (usize, usize) {
    (index % n_states, index / n_states)
}

/// Dense augmented MDP tables shared by [`HighMdp`] and [`LowMdp`].
#[derive(Debug, Clone, PartialEq)]
struct Tables<T> {
    n_states: usize,
    n_actions: usize,
    transition: Vec<T>,
    reward: Vec<T>,
    initial: Vec<T>,
    gamma: T,
    terminal: Vec<bool>,
}

impl<T: Real> Tables<T> {
    fn zeros(n_states: usize, n_actions: usize, gamma: T) -> Self {
        Self {
            n_states,
            n_actions,
            transition: vec![T::zero(); n_states * n_actions * n_states],
            reward: vec![T::zero(); n_states * n_actions],
            initial: vec![T::zero(); n_states],
            gamma,
            terminal: vec![false; n_states],
        }
    }

    fn row_mut(&mut self, s: usize, a: usize) -> &mut [T] {
        let start = (s * self.n_actions + a) * self.n_states;
        &mut self.transition[start..start + self.n_states]
    }
}

macro_rules! impl_finite_mdp {
    ($ty:ident) => {
        impl<T: Real> FiniteMdp<T> for $ty<T> {
            fn n_states(&self) -> usize {
                self.tables.n_states
            }
            fn n_actions(&self) -> usize {
                self.tables.n_actions
            }
            fn transition_row(&self, s: usize, a: usize) -> &[T] {
                let t = &self.tables;
                let start = (s * t.n_actions + a) * t.n_states;
                &t.transition[start..start + t.n_states]
            }
            fn reward(&self, s: usize, a: usize) -> T {
                self.tables.reward[s * self.tables.n_actions + a]
            }
            fn initial(&self) -> &[T] {
                &self.tables.initial
            }
            fn gamma(&self) -> T {
                self.tables.gamma
            }
            fn is_terminal(&self, s: usize) -> bool {
                self.tables.terminal[s]
            }
        }
    };
}

/// High MDP over `(o_prev, s)`. Depends only on the base MDP and the
/// intra-option policies.
#[derive(Debug, Clone, PartialEq)]
pub struct HighMdp<T> {
    base_states: usize,
    n_options: usize,
    tables: Tables<T>,
}

impl_finite_mdp!(HighMdp);

impl<T: Real> HighMdp<T> {
    pub fn base_states(&self) -> usize {
        self.base_states
    }

    pub fn n_options(&self) -> usize {
        self.n_options
    }

    pub fn index(&self, slot: OptionSlot, s: usize) -> usize {
        high_index(self.base_states, slot, s)
    }
}

/// Builds the high MDP:
/// `p((o, s') | (o_prev, s), a) = 1[a = o] p(s' | s, o)`, initial mass only on
/// `(#, s)`, reward `r(s, o)`.
pub fn build_high_mdp<T: Real>(mdp: &TabularMdp<T>, options: &OptionSet<T>) -> Result<HighMdp<T>> {
    if options.n_states() != mdp.n_states() || options.n_actions() != mdp.n_actions() {
        return Err(Error::InvalidModel("option tables do not match the MDP".into()));
    }
    let ns = mdp.n_states();
    let no = options.len();
    // only p(s'|s,o) and r(s,o) are needed; the master policy is irrelevant
    let probe = OptionModel::new(mdp.clone(), options.clone(), MasterPolicy::uniform(ns, no))?;
    let mut tables = Tables::zeros((no + 1) * ns, no, mdp.gamma());
    let mut kernels = Vec::with_capacity(ns * no);
    for s in 0..ns {
        for o in 0..no {
            kernels.push(probe.state_option_kernel(s, o)?);
        }
    }
    for slot_i in 0..=no {
        let slot = OptionSlot::from_slot_index(slot_i);
        for s in 0..ns {
            let from = high_index(ns, slot, s);
            tables.terminal[from] = mdp.terminal_mask()[s];
            for o in 0..no {
                let (ref row, r) = kernels[s * no + o];
                tables.reward[from * no + o] = r;
                let target_offset = high_index(ns, OptionSlot::Real(o), 0);
                let dest = tables.row_mut(from, o);
                dest[target_offset..target_offset + ns].copy_from_slice(row);
            }
        }
    }
    for s in 0..ns {
        tables.initial[high_index(ns, OptionSlot::Dummy, s)] = FiniteMdp::initial(mdp)[s];
    }
    Ok(HighMdp { base_states: ns, n_options: no, tables })
}

/// Low MDP over `(s, o)`. Depends on the base MDP, the master policy and the
/// terminations.
#[derive(Debug, Clone, PartialEq)]
pub struct LowMdp<T> {
    base_states: usize,
    n_options: usize,
    tables: Tables<T>,
}

impl_finite_mdp!(LowMdp);

impl<T: Real> LowMdp<T> {
    pub fn base_states(&self) -> usize {
        self.base_states
    }

    pub fn n_options(&self) -> usize {
        self.n_options
    }

    pub fn index(&self, s: usize, o: usize) -> usize {
        low_index(self.base_states, s, o)
    }
}

/// Builds the low MDP:
/// `p((s', o') | (s, o), a) = p(s' | s, a) p(o' | s', o)`,
/// `p0((s, o)) = p0(s) pi(o | s)`, reward `r(s, a)`.
pub fn build_low_mdp<T: Real>(
    mdp: &TabularMdp<T>,
    options: &OptionSet<T>,
    master: &MasterPolicy<T>,
) -> Result<LowMdp<T>> {
    let model = OptionModel::new(mdp.clone(), options.clone(), master.clone())?;
    let ns = mdp.n_states();
    let na = mdp.n_actions();
    let no = options.len();
    let mut tables = Tables::zeros(no * ns, na, mdp.gamma());
    // option kernel at arrival: p(o' | s', o)
    let arrival: Vec<Vec<T>> = (0..no)
        .flat_map(|o| (0..ns).map(move |s| (s, o)))
        .map(|(s, o)| model.option_kernel_unchecked(s, OptionSlot::Real(o)))
        .collect();
    for o in 0..no {
        for s in 0..ns {
            let from = low_index(ns, s, o);
            tables.terminal[from] = mdp.terminal_mask()[s];
            tables.initial[from] = FiniteMdp::initial(mdp)[s] * master.prob(s, o);
            for a in 0..na {
                tables.reward[from * na + a] = mdp.reward(s, a);
                let base_row = mdp.transition_row(s, a).to_vec();
                let dest = tables.row_mut(from, a);
                for (s_next, &p) in base_row.iter().enumerate() {
                    if p == T::zero() {
                        continue;
                    }
                    for (o_next, &q) in arrival[o * ns + s_next].iter().enumerate() {
                        dest[low_index(ns, s_next, o_next)] += p * q;
                    }
                }
            }
        }
    }
    Ok(LowMdp { base_states: ns, n_options: no, tables })
}

/// Markov policy on the high MDP:
/// `pi_high(o | (o_prev, s)) = p(o | s, o_prev)`, with `#` always terminating.
#[derive(Debug, Clone, PartialEq)]
pub struct HighPolicy<T> {
    base_states: usize,
    table: PolicyTable<T>,
}

impl<T: Real> HighPolicy<T> {
    pub fn new(model: &OptionModel<T>) -> Result<Self> {
        let ns = model.n_states();
        let no = model.n_options();
        let mut probs = Vec::with_capacity((no + 1) * ns * no);
        for slot_i in 0..=no {
            for s in 0..ns {
                probs.extend(model.option_transition_kernel(s, OptionSlot::from_slot_index(slot_i))?);
            }
        }
        Ok(Self { base_states: ns, table: PolicyTable::new((no + 1) * ns, no, probs)? })
    }

    pub fn prob(&self, slot: OptionSlot, s: usize, o: usize) -> T {
        self.table.prob(high_index(self.base_states, slot, s), o)
    }

    pub fn row(&self, slot: OptionSlot, s: usize) -> &[T] {
        self.table.row(high_index(self.base_states, slot, s))
    }

    pub fn table(&self) -> &PolicyTable<T> {
        &self.table
    }
}

/// Markov policy on the low MDP: `pi_low(a | (s, o)) = pi_o(a | s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowPolicy<T> {
    base_states: usize,
    table: PolicyTable<T>,
}

impl<T: Real> LowPolicy<T> {
    pub fn new(options: &OptionSet<T>) -> Result<Self> {
        let ns = options.n_states();
        let na = options.n_actions();
        let probs: Vec<T> = options.iter().flat_map(|o| o.pi().as_slice().iter().copied()).collect();
        Ok(Self { base_states: ns, table: PolicyTable::new(options.len() * ns, na, probs)? })
    }

    pub fn prob(&self, s: usize, o: usize, a: usize) -> T {
        self.table.prob(low_index(self.base_states, s, o), a)
    }

    pub fn table(&self) -> &PolicyTable<T> {
        &self.table
    }
}

/// Image of a base trajectory in the high MDP: states `(O_{t-1}, S_t)` with
/// `O_{-1} = #`, actions `O_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct HighTrajectory<T> {
    pub states: Vec<(OptionSlot, usize)>,
    pub actions: Vec<usize>,
    pub rewards: Vec<T>,
    pub terminated: bool,
}

/// Image of a base trajectory in the low MDP: states `(S_t, O_t)` for every
/// decision step, actions `A_t`. The option at the final state `S_T` is never
/// drawn by the sampler, so the last state is kept as a bare base state and
/// the low-chain probability marginalises the final option.
#[derive(Debug, Clone, PartialEq)]
pub struct LowTrajectory<T> {
    pub states: Vec<(usize, usize)>,
    pub final_state: usize,
    pub actions: Vec<usize>,
    pub rewards: Vec<T>,
    pub terminated: bool,
}

pub fn lift_high<T: Real>(traj: &Trajectory<T>) -> HighTrajectory<T> {
    lift_high_options(&traj.without_actions())
}

pub fn lift_high_options<T: Real>(traj: &OptionTrajectory<T>) -> HighTrajectory<T> {
    let states = traj
        .states
        .iter()
        .enumerate()
        .map(|(t, &s)| {
            let prev = if t == 0 { OptionSlot::Dummy } else { OptionSlot::Real(traj.options[t - 1]) };
            (prev, s)
        })
        .collect();
    HighTrajectory {
        states,
        actions: traj.options.clone(),
        rewards: traj.rewards.clone(),
        terminated: traj.terminated,
    }
}

impl<T: Real> HighTrajectory<T> {
    /// Inverse of [`lift_high_options`]; fails on sequences outside its range.
    pub fn to_base(&self) -> Result<OptionTrajectory<T>> {
        let n = self.states.len();
        if n == 0 || self.actions.len() + 1 != n || self.rewards.len() + 1 != n {
            return Err(Error::InvalidModel("high trajectory has inconsistent lengths".into()));
        }
        if self.states[0].0 != OptionSlot::Dummy {
            return Err(Error::InvalidModel("high trajectory must start from the dummy option".into()));
        }
        for t in 0..self.actions.len() {
            if self.states[t + 1].0 != OptionSlot::Real(self.actions[t]) {
                return Err(Error::InvalidModel(format!(
                    "high state {} does not carry the option chosen at step {t}",
                    t + 1
                )));
            }
        }
        Ok(OptionTrajectory {
            states: self.states.iter().map(|&(_, s)| s).collect(),
            options: self.actions.clone(),
            rewards: self.rewards.clone(),
            terminated: self.terminated,
        })
    }

    pub fn discounted_return(&self, gamma: T) -> T {
        crate::mdp::discounted_sum(&self.rewards, gamma)
    }
}

pub fn lift_low<T: Real>(traj: &Trajectory<T>) -> LowTrajectory<T> {
    let t_len = traj.actions.len();
    LowTrajectory {
        states: (0..t_len).map(|t| (traj.states[t], traj.options[t])).collect(),
        final_state: *traj.states.last().expect("trajectory has at least one state"),
        actions: traj.actions.clone(),
        rewards: traj.rewards.clone(),
        terminated: traj.terminated,
    }
}

impl<T: Real> LowTrajectory<T> {
    /// Inverse of [`lift_low`].
    pub fn to_base(&self) -> Result<Trajectory<T>> {
        let n = self.states.len();
        if self.actions.len() != n || self.rewards.len() != n {
            return Err(Error::InvalidModel("low trajectory has inconsistent lengths".into()));
        }
        let mut states: Vec<usize> = self.states.iter().map(|&(s, _)| s).collect();
        states.push(self.final_state);
        Ok(Trajectory {
            states,
            options: self.states.iter().map(|&(_, o)| o).collect(),
            actions: self.actions.clone(),
            rewards: self.rewards.clone(),
            terminated: self.terminated,
        })
    }

    pub fn discounted_return(&self, gamma: T) -> T {
        crate::mdp::discounted_sum(&self.rewards, gamma)
    }
}

#[derive(Serialize)]
struct TableDump {
    gamma: f64,
    initial: Vec<f64>,
    terminal: Vec<bool>,
    reward: Vec<Vec<f64>>,
    transition: Vec<Vec<Vec<f64>>>,
}

/// Dumps any finite MDP in the same TOML layout the model loader reads
/// (`reward[s][a]`, `transition[s][a][s']`), with augmented indices.
pub fn dump_tables<T: Real, M: FiniteMdp<T>>(mdp: &M) -> String {
    let ns = mdp.n_states();
    let na = mdp.n_actions();
    let dump = TableDump {
        gamma: mdp.gamma().as_f64(),
        initial: mdp.initial().iter().map(|p| p.as_f64()).collect(),
        terminal: (0..ns).map(|s| mdp.is_terminal(s)).collect(),
        reward: (0..ns).map(|s| (0..na).map(|a| mdp.reward(s, a).as_f64()).collect()).collect(),
        transition: (0..ns)
            .map(|s| {
                (0..na)
                    .map(|a| mdp.transition_row(s, a).iter().map(|p| p.as_f64()).collect())
                    .collect()
            })
            .collect(),
    };
    toml::to_string(&dump).expect("plain tables always serialise")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{OptionDef, TabularMdp};

    fn model(beta: f64) -> OptionModel<f64> {
        let transition = vec![
            0.5, 0.5, 0.0, 0.0, 0.0, 1.0, //
            0.0, 0.0, 1.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 0.0, 0.0, 1.0,
        ];
        let mdp = TabularMdp::new(
            3,
            2,
            transition,
            vec![0.0, 1.0, 2.0, 0.5, 0.0, 0.0],
            vec![0.7, 0.3, 0.0],
            0.9,
            vec![false, false, true],
        )
        .unwrap();
        let o0 = OptionDef::new(PolicyTable::deterministic(3, 2, |_| 0), vec![beta; 3]).unwrap();
        let o1 = OptionDef::new(PolicyTable::uniform(3, 2), vec![beta; 3]).unwrap();
        let master = MasterPolicy::new(PolicyTable::from_rows(&[vec![0.2, 0.8], vec![0.6, 0.4], vec![0.5, 0.5]]).unwrap());
        OptionModel::new(mdp, OptionSet::new(vec![o0, o1]).unwrap(), master).unwrap()
    }

    #[test]
    fn high_reward_is_option_reward() {
        let m = model(0.4);
        let high = build_high_mdp(&m.mdp, &m.options).unwrap();
        for slot_i in 0..3 {
            let slot = OptionSlot::from_slot_index(slot_i);
            for s in 0..3 {
                // option 0 always plays action 0
                assert_eq!(high.reward(high.index(slot, s), 0), m.mdp.reward(s, 0));
            }
        }
    }

    #[test]
    fn high_transition_requires_matching_action() {
        let m = model(0.4);
        let high = build_high_mdp(&m.mdp, &m.options).unwrap();
        let from = high.index(OptionSlot::Real(0), 0);
        let row = high.transition_row(from, 0);
        for s_next in 0..3 {
            assert_eq!(row[high.index(OptionSlot::Real(1), s_next)], 0.0);
        }
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn high_initial_only_on_dummy() {
        let m = model(0.4);
        let high = build_high_mdp(&m.mdp, &m.options).unwrap();
        for s in 0..3 {
            assert_eq!(high.initial()[high.index(OptionSlot::Dummy, s)], FiniteMdp::initial(&m.mdp)[s]);
            assert_eq!(high.initial()[high.index(OptionSlot::Real(1), s)], 0.0);
        }
    }

    #[test]
    fn low_transition_limits() {
        let m = model(0.0);
        let low = build_low_mdp(&m.mdp, &m.options, &m.master).unwrap();
        for s in 0..3 {
            for o in 0..2 {
                for a in 0..2 {
                    let row = low.transition_row(low.index(s, o), a);
                    for s2 in 0..3 {
                        for o2 in 0..2 {
                            let expect = if o2 == o { m.mdp.transition_row(s, a)[s2] } else { 0.0 };
                            assert_eq!(row[low.index(s2, o2)], expect);
                        }
                    }
                }
            }
        }
        let m = model(1.0);
        let low = build_low_mdp(&m.mdp, &m.options, &m.master).unwrap();
        let row = low.transition_row(low.index(0, 1), 0);
        for s2 in 0..3 {
            for o2 in 0..2 {
                let expect = m.mdp.transition_row(0, 0)[s2] * m.master.prob(s2, o2);
                assert!((row[low.index(s2, o2)] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn high_policy_matches_kernel_bitwise() {
        let m = model(0.35);
        let hp = HighPolicy::new(&m).unwrap();
        for slot_i in 0..3 {
            let slot = OptionSlot::from_slot_index(slot_i);
            for s in 0..3 {
                assert_eq!(hp.row(slot, s), m.option_transition_kernel(s, slot).unwrap().as_slice());
            }
        }
    }

    #[test]
    fn length_one_lift() {
        let t = Trajectory { states: vec![0, 1], options: vec![1], actions: vec![0], rewards: vec![0.5], terminated: false };
        let h = lift_high(&t);
        assert_eq!(h.states, vec![(OptionSlot::Dummy, 0), (OptionSlot::Real(1), 1)]);
        assert_eq!(h.to_base().unwrap(), t.without_actions());
        assert_eq!(lift_low(&t).to_base().unwrap(), t);
    }

    #[test]
    fn malformed_high_trajectory_is_rejected() {
        let h = HighTrajectory {
            states: vec![(OptionSlot::Dummy, 0), (OptionSlot::Real(0), 1)],
            actions: vec![1],
            rewards: vec![0.0],
            terminated: false,
        };
        assert!(h.to_base().is_err());
    }

    #[test]
    fn dump_round_trips_through_loader_schema() {
        let m = model(0.3);
        let low = build_low_mdp(&m.mdp, &m.options, &m.master).unwrap();
        let text = dump_tables(&low);
        let parsed = crate::mdp::parse_model_str(&text).unwrap();
        assert_eq!(parsed.transition.len(), low.n_states());
        assert_eq!(parsed.transition[0].len(), low.n_actions());
    }
}
