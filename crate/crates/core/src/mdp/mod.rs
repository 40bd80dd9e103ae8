//! Finite base MDPs, options and call-and-return execution.
//!
//! Tables are dense and row-major. A transition tensor is indexed
//! `(s, a, s')` as `(s * n_actions + a) * n_states + s'`, a reward table
//! `(s, a)` as `s * n_actions + a`.

mod config;
mod env;

pub use config::{load_model_file, parse_model_str, ModelFile, OptionFile};
pub use env::{
    grid_world, make_environment, repeat_action_options, EnvParams, Environment, GridLayout,
    StartRule, ACTION_EAST, ACTION_NORTH, ACTION_SOUTH, ACTION_WEST,
};

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Read-only view of a finite MDP, implemented by the base MDP and by both
/// augmented MDPs.
pub trait FiniteMdp<T: Real> {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    /// Distribution over next states for `(s, a)`.
    fn transition_row(&self, s: usize, a: usize) -> &[T];
    fn reward(&self, s: usize, a: usize) -> T;
    fn initial(&self) -> &[T];
    fn gamma(&self) -> T;
    fn is_terminal(&self, s: usize) -> bool;
}

fn check_distribution<T: Real>(what: &str, row: &[T]) -> Result<()> {
    let mut total = T::zero();
    for &p in row {
        if !p.is_finite() || p < T::zero() {
            return Err(Error::InvalidModel(format!("{what}: entry {p} is not a probability")));
        }
        total += p;
    }
    if (total - T::one()).abs() > T::prob_tol() {
        return Err(Error::InvalidModel(format!("{what}: row sums to {total}")));
    }
    Ok(())
}

/// Row-stochastic table mapping a row index to a distribution over columns.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable<T> {
    n_rows: usize,
    n_cols: usize,
    probs: Vec<T>,
}

impl<T: Real> PolicyTable<T> {
    pub fn new(n_rows: usize, n_cols: usize, probs: Vec<T>) -> Result<Self> {
        if probs.len() != n_rows * n_cols {
            return Err(Error::Shape { expected: n_rows * n_cols, got: probs.len() });
        }
        if n_cols == 0 {
            return Err(Error::InvalidModel("policy table with no columns".into()));
        }
        for r in 0..n_rows {
            check_distribution("policy row", &probs[r * n_cols..(r + 1) * n_cols])?;
        }
        Ok(Self { n_rows, n_cols, probs })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::InvalidModel("ragged policy rows".into()));
        }
        Self::new(rows.len(), n_cols, rows.concat())
    }

    pub fn uniform(n_rows: usize, n_cols: usize) -> Self {
        let p = T::one() / T::lit(n_cols as f64);
        Self { n_rows, n_cols, probs: vec![p; n_rows * n_cols] }
    }

    /// Deterministic table choosing `choice(row)` in every row.
    pub fn deterministic(n_rows: usize, n_cols: usize, choice: impl Fn(usize) -> usize) -> Self {
        let mut probs = vec![T::zero(); n_rows * n_cols];
        for r in 0..n_rows {
            probs[r * n_cols + choice(r)] = T::one();
        }
        Self { n_rows, n_cols, probs }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.probs[r * self.n_cols..(r + 1) * self.n_cols]
    }

    #[inline]
    pub fn prob(&self, r: usize, c: usize) -> T {
        self.probs[r * self.n_cols + c]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.probs
    }

    /// True when every row puts all of its mass on one column.
    pub fn is_deterministic(&self) -> bool {
        (0..self.n_rows).all(|r| self.row(r).iter().any(|&p| p == T::one()))
    }
}

/// Finite discounted MDP `(S, A, r, p, p0, gamma)` with absorbing terminal states.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp<T> {
    n_states: usize,
    n_actions: usize,
    transition: Vec<T>,
    reward: Vec<T>,
    initial: Vec<T>,
    gamma: T,
    terminal: Vec<bool>,
}

impl<T: Real> TabularMdp<T> {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<T>,
        reward: Vec<T>,
        initial: Vec<T>,
        gamma: T,
        terminal: Vec<bool>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidModel("empty state or action space".into()));
        }
        let check_len = |expected: usize, got: usize| {
            if expected == got {
                Ok(())
            } else {
                Err(Error::Shape { expected, got })
            }
        };
        check_len(n_states * n_actions * n_states, transition.len())?;
        check_len(n_states * n_actions, reward.len())?;
        check_len(n_states, initial.len())?;
        check_len(n_states, terminal.len())?;
        if !(gamma >= T::zero() && gamma < T::one()) {
            return Err(Error::InvalidModel(format!("discount {gamma} outside [0, 1)")));
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidModel("non-finite reward".into()));
        }
        check_distribution("initial distribution", &initial)?;
        let mdp = Self { n_states, n_actions, transition, reward, initial, gamma, terminal };
        for s in 0..n_states {
            for a in 0..n_actions {
                check_distribution("transition row", mdp.transition_row(s, a))?;
                if mdp.terminal[s] {
                    if mdp.transition_row(s, a)[s] != T::one() {
                        return Err(Error::InvalidModel(format!(
                            "terminal state {s} must self-loop"
                        )));
                    }
                    if mdp.reward(s, a) != T::zero() {
                        return Err(Error::InvalidModel(format!(
                            "terminal state {s} must have zero reward"
                        )));
                    }
                }
            }
        }
        Ok(mdp)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn terminal_mask(&self) -> &[bool] {
        &self.terminal
    }

    pub fn transition_tensor(&self) -> &[T] {
        &self.transition
    }

    pub fn reward_table(&self) -> &[T] {
        &self.reward
    }

    #[inline]
    pub fn transition_row(&self, s: usize, a: usize) -> &[T] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> T {
        self.reward[s * self.n_actions + a]
    }

    /// Same dynamics with a different discount.
    pub fn with_gamma(&self, gamma: T) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            self.transition.clone(),
            self.reward.clone(),
            self.initial.clone(),
            gamma,
            self.terminal.clone(),
        )
    }

    /// Same dynamics with a different initial distribution.
    pub fn with_initial(&self, initial: Vec<T>) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            self.transition.clone(),
            self.reward.clone(),
            initial,
            self.gamma,
            self.terminal.clone(),
        )
    }

    /// Samples `s' ~ p(.|s, a)`.
    pub fn sample_next<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> usize {
        sample_categorical(self.transition_row(s, a), rng)
    }

    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_categorical(&self.initial, rng)
    }
}

impl<T: Real> FiniteMdp<T> for TabularMdp<T> {
    fn n_states(&self) -> usize {
        self.n_states
    }
    fn n_actions(&self) -> usize {
        self.n_actions
    }
    fn transition_row(&self, s: usize, a: usize) -> &[T] {
        TabularMdp::transition_row(self, s, a)
    }
    fn reward(&self, s: usize, a: usize) -> T {
        TabularMdp::reward(self, s, a)
    }
    fn initial(&self) -> &[T] {
        &self.initial
    }
    fn gamma(&self) -> T {
        self.gamma
    }
    fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }
}

/// Either the dummy option `#` or a real option index.
///
/// In augmented tables the dummy takes slot 0 and real option `o` takes
/// slot `o + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OptionSlot {
    Dummy,
    Real(usize),
}

impl OptionSlot {
    #[inline]
    pub fn slot_index(self) -> usize {
        match self {
            OptionSlot::Dummy => 0,
            OptionSlot::Real(o) => o + 1,
        }
    }

    #[inline]
    pub fn from_slot_index(i: usize) -> Self {
        if i == 0 {
            OptionSlot::Dummy
        } else {
            OptionSlot::Real(i - 1)
        }
    }

    pub fn real(self) -> Option<usize> {
        match self {
            OptionSlot::Dummy => None,
            OptionSlot::Real(o) => Some(o),
        }
    }
}

/// An option with initiation set `S`: intra-option policy plus termination.
#[derive(Debug, Clone, PartialEq)]
pub struct OptionDef<T> {
    pi: PolicyTable<T>,
    beta: Vec<T>,
}

impl<T: Real> OptionDef<T> {
    pub fn new(pi: PolicyTable<T>, beta: Vec<T>) -> Result<Self> {
        if beta.len() != pi.n_rows() {
            return Err(Error::Shape { expected: pi.n_rows(), got: beta.len() });
        }
        if let Some(b) = beta.iter().find(|&&b| !(b >= T::zero() && b <= T::one())) {
            return Err(Error::InvalidModel(format!("termination probability {b} outside [0, 1]")));
        }
        Ok(Self { pi, beta })
    }

    pub fn pi(&self) -> &PolicyTable<T> {
        &self.pi
    }

    pub fn beta(&self) -> &[T] {
        &self.beta
    }
}

/// Ordered option set `O`; the dummy option is [`OptionSlot::Dummy`].
#[derive(Debug, Clone, PartialEq)]
pub struct OptionSet<T> {
    options: Vec<OptionDef<T>>,
}

impl<T: Real> OptionSet<T> {
    pub fn new(options: Vec<OptionDef<T>>) -> Result<Self> {
        let first = options
            .first()
            .ok_or_else(|| Error::InvalidModel("option set is empty".into()))?;
        let (ns, na) = (first.pi.n_rows(), first.pi.n_cols());
        if options.iter().any(|o| o.pi.n_rows() != ns || o.pi.n_cols() != na) {
            return Err(Error::InvalidModel("options disagree on table shapes".into()));
        }
        Ok(Self { options })
    }

    pub const DUMMY: OptionSlot = OptionSlot::Dummy;

    pub fn len(&self) -> usize {
        self.options.len()
    }

    pub fn is_empty(&self) -> bool {
        self.options.is_empty()
    }

    pub fn get(&self, o: usize) -> Result<&OptionDef<T>> {
        self.options
            .get(o)
            .ok_or(Error::Index { what: "option", index: o, bound: self.options.len() })
    }

    pub fn iter(&self) -> impl Iterator<Item = &OptionDef<T>> {
        self.options.iter()
    }

    pub fn n_states(&self) -> usize {
        self.options[0].pi.n_rows()
    }

    pub fn n_actions(&self) -> usize {
        self.options[0].pi.n_cols()
    }

    /// Termination probability; `#` always terminates.
    #[inline]
    pub fn beta(&self, slot: OptionSlot, s: usize) -> T {
        match slot {
            OptionSlot::Dummy => T::one(),
            OptionSlot::Real(o) => self.options[o].beta[s],
        }
    }

    #[inline]
    pub fn pi(&self, o: usize, s: usize, a: usize) -> T {
        self.options[o].pi.prob(s, a)
    }

    pub fn all_deterministic(&self) -> bool {
        self.options.iter().all(|o| o.pi.is_deterministic())
    }
}

/// Policy over (non-dummy) options.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterPolicy<T>(PolicyTable<T>);

impl<T: Real> MasterPolicy<T> {
    pub fn new(table: PolicyTable<T>) -> Self {
        Self(table)
    }

    pub fn uniform(n_states: usize, n_options: usize) -> Self {
        Self(PolicyTable::uniform(n_states, n_options))
    }

    #[inline]
    pub fn prob(&self, s: usize, o: usize) -> T {
        self.0.prob(s, o)
    }

    pub fn row(&self, s: usize) -> &[T] {
        self.0.row(s)
    }

    pub fn table(&self) -> &PolicyTable<T> {
        &self.0
    }
}

/// A base MDP, its options and a master policy: the option-induced SMDP.
#[derive(Debug, Clone, PartialEq)]
pub struct OptionModel<T> {
    pub mdp: TabularMdp<T>,
    pub options: OptionSet<T>,
    pub master: MasterPolicy<T>,
}

impl<T: Real> OptionModel<T> {
    pub fn new(mdp: TabularMdp<T>, options: OptionSet<T>, master: MasterPolicy<T>) -> Result<Self> {
        if options.n_states() != mdp.n_states() || options.n_actions() != mdp.n_actions() {
            return Err(Error::InvalidModel("option tables do not match the MDP".into()));
        }
        if master.table().n_rows() != mdp.n_states() || master.table().n_cols() != options.len() {
            return Err(Error::InvalidModel("master policy does not match the option set".into()));
        }
        Ok(Self { mdp, options, master })
    }

    pub fn n_states(&self) -> usize {
        self.mdp.n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.mdp.n_actions()
    }

    pub fn n_options(&self) -> usize {
        self.options.len()
    }

    fn check_state(&self, s: usize) -> Result<()> {
        Error::check_index("state", s, self.n_states())
    }

    fn check_slot(&self, slot: OptionSlot) -> Result<()> {
        match slot {
            OptionSlot::Dummy => Ok(()),
            OptionSlot::Real(o) => Error::check_index("option", o, self.n_options()),
        }
    }

    /// `p(o | s, o_prev) = (1 - beta_{o_prev}(s)) 1[o = o_prev] + beta_{o_prev}(s) pi(o | s)`.
    pub fn option_transition_kernel(&self, s: usize, prev: OptionSlot) -> Result<Vec<T>> {
        self.check_state(s)?;
        self.check_slot(prev)?;
        Ok(self.option_kernel_unchecked(s, prev))
    }

    pub(crate) fn option_kernel_unchecked(&self, s: usize, prev: OptionSlot) -> Vec<T> {
        let beta = self.options.beta(prev, s);
        let mut out: Vec<T> = self.master.row(s).iter().map(|&p| beta * p).collect();
        if let OptionSlot::Real(o) = prev {
            out[o] += T::one() - beta;
        }
        out
    }

    /// Next-state distribution `p(.|s, o)` and expected reward `r(s, o)`.
    pub fn state_option_kernel(&self, s: usize, o: usize) -> Result<(Vec<T>, T)> {
        self.check_state(s)?;
        Error::check_index("option", o, self.n_options())?;
        let ns = self.n_states();
        let mut row = vec![T::zero(); ns];
        let mut reward = T::zero();
        for a in 0..self.n_actions() {
            let w = self.options.pi(o, s, a);
            if w == T::zero() {
                continue;
            }
            reward += w * self.mdp.reward(s, a);
            for (acc, &p) in row.iter_mut().zip(self.mdp.transition_row(s, a)) {
                *acc += w * p;
            }
        }
        Ok((row, reward))
    }

    /// `r(s, o) = sum_a pi_o(a|s) r(s, a)`.
    pub fn option_reward(&self, s: usize, o: usize) -> T {
        (0..self.n_actions())
            .map(|a| self.options.pi(o, s, a) * self.mdp.reward(s, a))
            .sum()
    }

    /// Samples one episode under call-and-return execution. Per step the
    /// stream is consumed in a fixed order: option, action, next state.
    pub fn sample_episode<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        max_steps: usize,
    ) -> Result<Trajectory<T>> {
        if max_steps == 0 {
            return Err(Error::Config("max_steps must be at least 1".into()));
        }
        let mut s = self.mdp.sample_initial(rng);
        let mut traj = Trajectory {
            states: vec![s],
            options: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            terminated: self.mdp.terminal_mask()[s],
        };
        let mut prev = OptionSlot::Dummy;
        while !traj.terminated && traj.actions.len() < max_steps {
            let o = sample_categorical(&self.option_kernel_unchecked(s, prev), rng);
            let a = sample_categorical(self.options.get(o)?.pi().row(s), rng);
            let next = self.mdp.sample_next(s, a, rng);
            traj.options.push(o);
            traj.actions.push(a);
            traj.rewards.push(self.mdp.reward(s, a));
            traj.states.push(next);
            traj.terminated = self.mdp.terminal_mask()[next];
            prev = OptionSlot::Real(o);
            s = next;
        }
        Ok(traj)
    }
}

/// Base trajectory `S_0, O_0, A_0, R_1, S_1, ..., S_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub states: Vec<usize>,
    pub options: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<T>,
    /// `S_T` is terminal (as opposed to truncated).
    pub terminated: bool,
}

impl<T: Real> Trajectory<T> {
    /// Number of transitions `T`.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn is_consistent(&self) -> bool {
        let n = self.states.len();
        n >= 1 && self.options.len() == n - 1 && self.actions.len() == n - 1 && self.rewards.len() == n - 1
    }

    pub fn discounted_return(&self, gamma: T) -> T {
        discounted_sum(&self.rewards, gamma)
    }

    /// Projection onto states and options only.
    pub fn without_actions(&self) -> OptionTrajectory<T> {
        OptionTrajectory {
            states: self.states.clone(),
            options: self.options.clone(),
            rewards: self.rewards.clone(),
            terminated: self.terminated,
        }
    }
}

/// Trajectory over states and options only: `S_0, O_0, S_1, O_1, ..., S_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptionTrajectory<T> {
    pub states: Vec<usize>,
    pub options: Vec<usize>,
    pub rewards: Vec<T>,
    pub terminated: bool,
}

/// `sum_t gamma^t rewards[t]`.
pub fn discounted_sum<T: Real>(rewards: &[T], gamma: T) -> T {
    let mut acc = T::zero();
    let mut discount = T::one();
    for &r in rewards {
        acc += discount * r;
        discount *= gamma;
    }
    acc
}

/// Inverse-CDF sampling from a probability vector. Consumes exactly one
/// uniform draw.
pub fn sample_categorical<T: Real, R: Rng + ?Sized>(probs: &[T], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in probs.iter().enumerate() {
        let p = p.as_f64();
        if p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_state_model(beta: f64) -> OptionModel<f64> {
        // state 0 -> {0,1} by action, state 1 terminal
        let transition = vec![
            1.0, 0.0, 0.0, 1.0, //
            0.0, 1.0, 0.0, 1.0,
        ];
        let mdp = TabularMdp::new(2, 2, transition, vec![0.0, 1.0, 0.0, 0.0], vec![1.0, 0.0], 0.9, vec![false, true])
            .unwrap();
        let opt = |a: usize| {
            OptionDef::new(PolicyTable::deterministic(2, 2, |_| a), vec![beta; 2]).unwrap()
        };
        let options = OptionSet::new(vec![opt(0), opt(1)]).unwrap();
        OptionModel::new(mdp, options, MasterPolicy::uniform(2, 2)).unwrap()
    }

    #[test]
    fn kernel_with_full_termination_is_master() {
        let m = two_state_model(1.0);
        assert_eq!(m.option_transition_kernel(0, OptionSlot::Real(0)).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn kernel_without_termination_keeps_option() {
        let m = two_state_model(0.0);
        assert_eq!(m.option_transition_kernel(0, OptionSlot::Real(1)).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn kernel_mixture_hand_value() {
        let m = two_state_model(0.3);
        let k = m.option_transition_kernel(0, OptionSlot::Real(0)).unwrap();
        assert!((k[0] - 0.85).abs() < 1e-15);
        assert!((k[1] - 0.15).abs() < 1e-15);
    }

    #[test]
    fn dummy_previous_option_draws_from_master() {
        let m = two_state_model(0.0);
        assert_eq!(m.option_transition_kernel(0, OptionSlot::Dummy).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn kernel_rejects_bad_indices() {
        let m = two_state_model(0.5);
        assert!(matches!(m.option_transition_kernel(7, OptionSlot::Dummy), Err(Error::Index { .. })));
        assert!(matches!(m.option_transition_kernel(0, OptionSlot::Real(2)), Err(Error::Index { .. })));
    }

    #[test]
    fn state_option_kernel_degenerate_and_mixture() {
        let m = two_state_model(0.5);
        let (row, r) = m.state_option_kernel(0, 1).unwrap();
        assert_eq!(row, m.mdp.transition_row(0, 1).to_vec());
        assert_eq!(r, 1.0);
        let uniform = OptionDef::new(PolicyTable::uniform(2, 2), vec![0.5; 2]).unwrap();
        let m2 = OptionModel::new(m.mdp.clone(), OptionSet::new(vec![uniform]).unwrap(), MasterPolicy::uniform(2, 1)).unwrap();
        let (row, r) = m2.state_option_kernel(0, 0).unwrap();
        assert_eq!(r, 0.5);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_tables_are_rejected() {
        assert!(TabularMdp::<f64>::new(1, 1, vec![0.5], vec![0.0], vec![1.0], 0.9, vec![false]).is_err());
        assert!(TabularMdp::<f64>::new(1, 1, vec![1.0], vec![1.0], vec![1.0], 0.9, vec![true]).is_err());
        assert!(TabularMdp::<f64>::new(1, 1, vec![1.0], vec![0.0], vec![1.0], 1.0, vec![false]).is_err());
        assert!(OptionDef::new(PolicyTable::<f64>::uniform(1, 2), vec![1.5]).is_err());
    }

    #[test]
    fn single_option_never_switches() {
        let m = two_state_model(0.0);
        let mdp = m.mdp.with_initial(vec![1.0, 0.0]).unwrap();
        let options = OptionSet::new(vec![OptionDef::new(PolicyTable::uniform(2, 2), vec![0.0; 2]).unwrap()]).unwrap();
        let model = OptionModel::new(mdp, options, MasterPolicy::uniform(2, 1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let t = model.sample_episode(&mut rng, 20).unwrap();
            assert!(t.is_consistent());
            assert!(t.options.iter().all(|&o| o == 0));
        }
    }

    #[test]
    fn zero_max_steps_is_rejected() {
        let m = two_state_model(0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(m.sample_episode(&mut rng, 0).is_err());
    }
}
