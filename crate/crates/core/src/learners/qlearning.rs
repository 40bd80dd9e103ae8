//! Tabular value learning over options: SMDP Q-learning and intra-option
//! Q-learning (on-option and off-option).

use rand::Rng;

use crate::augmented::low_index;
use crate::error::{Error, Result};
use crate::mdp::{OptionSet, OptionSlot};
use crate::scalar::Real;

/// Step size schedule per table entry: `alpha / (1 + n)^power` after `n`
/// earlier updates of that entry. `power = 0` is a constant step size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSize {
    pub alpha: f64,
    pub power: f64,
}

impl StepSize {
    pub fn constant(alpha: f64) -> Self {
        Self { alpha, power: 0.0 }
    }
}

/// Index of the largest value, ties to the lowest index.
pub fn argmax<T: Real>(values: &[T]) -> usize {
    let mut best = 0;
    for i in 1..values.len() {
        if values[i] > values[best] {
            best = i;
        }
    }
    best
}

/// Uniform choice with probability `epsilon`, otherwise [`argmax`]. Always
/// consumes one uniform draw, plus one more when exploring.
pub fn epsilon_greedy<T: Real, R: Rng + ?Sized>(values: &[T], epsilon: f64, rng: &mut R) -> usize {
    if rng.random::<f64>() < epsilon {
        rng.random_range(0..values.len())
    } else {
        argmax(values)
    }
}

/// `Q(s, o)` stored at `o * |S| + s`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable<T> {
    n_states: usize,
    n_options: usize,
    q: Vec<T>,
    visits: Vec<u64>,
    pub step_size: StepSize,
    pub epsilon: f64,
}

impl<T: Real> QTable<T> {
    pub fn new(n_states: usize, n_options: usize, step_size: StepSize, epsilon: f64) -> Result<Self> {
        if !(step_size.alpha >= 0.0 && step_size.alpha <= 1.0) {
            return Err(Error::Config(format!("step size {} is outside [0, 1]", step_size.alpha)));
        }
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::Config(format!("exploration rate {epsilon} is outside [0, 1]")));
        }
        let n = n_states * n_options;
        Ok(Self { n_states, n_options, q: vec![T::zero(); n], visits: vec![0; n], step_size, epsilon })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_options(&self) -> usize {
        self.n_options
    }

    pub fn get(&self, s: usize, o: usize) -> T {
        self.q[low_index(self.n_states, s, o)]
    }

    pub fn set(&mut self, s: usize, o: usize, value: T) {
        let i = low_index(self.n_states, s, o);
        self.q[i] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.q
    }

    pub fn max(&self, s: usize) -> T {
        (0..self.n_options).map(|o| self.get(s, o)).fold(T::neg_infinity(), T::max)
    }

    /// Greedy option, ties to the lowest index.
    pub fn greedy(&self, s: usize) -> usize {
        let row: Vec<T> = (0..self.n_options).map(|o| self.get(s, o)).collect();
        argmax(&row)
    }

    /// Epsilon-greedy choice. Always consumes one uniform draw, plus one
    /// more when exploring.
    pub fn epsilon_greedy<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> usize {
        let row: Vec<T> = (0..self.n_options).map(|o| self.get(s, o)).collect();
        epsilon_greedy(&row, self.epsilon, rng)
    }

    fn alpha(&mut self, i: usize) -> T {
        let n = self.visits[i];
        self.visits[i] += 1;
        T::lit(self.step_size.alpha / (1.0 + n as f64).powf(self.step_size.power))
    }

    fn move_towards(&mut self, s: usize, o: usize, target: T) {
        let i = low_index(self.n_states, s, o);
        let a = self.alpha(i);
        let old = self.q[i];
        self.q[i] = old + a * (target - old);
    }

    /// `Q(s,o) += alpha (G + gamma^k max_o' Q(s_end, o') - Q(s,o))` for an
    /// option that ran `k` steps from `s` and collected discounted reward
    /// `G`. A terminal `s_end` contributes no bootstrap.
    #[allow(clippy::too_many_arguments)]
    pub fn smdp_q_update(&mut self, s: usize, o: usize, g: T, s_end: usize, duration: u32, gamma: T, end_is_terminal: bool) {
        let bootstrap = if end_is_terminal { T::zero() } else { gamma.powi(duration as i32) * self.max(s_end) };
        self.move_towards(s, o, g + bootstrap);
    }

    /// `U(o, s') = (1 - beta_o(s')) Q(s', o) + beta_o(s') max Q(s', .)`, zero
    /// at a terminal `s'`.
    pub fn arrival_value(&self, options: &OptionSet<T>, o: usize, s_next: usize, terminal: bool) -> T {
        if terminal {
            return T::zero();
        }
        let beta = options.beta(OptionSlot::Real(o), s_next);
        (T::one() - beta) * self.get(s_next, o) + beta * self.max(s_next)
    }

    /// Intra-option update of the executed option `o` on `(s, a, r, s')`.
    #[allow(clippy::too_many_arguments)]
    pub fn intra_option_q_update(
        &mut self,
        options: &OptionSet<T>,
        s: usize,
        o: usize,
        r: T,
        s_next: usize,
        gamma: T,
        terminal: bool,
    ) {
        let target = r + gamma * self.arrival_value(options, o, s_next, terminal);
        self.move_towards(s, o, target);
    }

    /// Applies the intra-option update to every option whose policy could
    /// have taken `a` in `s`. Only sound for deterministic intra-option
    /// policies, so anything else is rejected.
    #[allow(clippy::too_many_arguments)]
    pub fn off_option_q_update(
        &mut self,
        options: &OptionSet<T>,
        s: usize,
        a: usize,
        r: T,
        s_next: usize,
        gamma: T,
        terminal: bool,
    ) -> Result<usize> {
        if !options.all_deterministic() {
            return Err(Error::Unsupported(
                "off-option intra-option Q-learning needs deterministic intra-option policies".into(),
            ));
        }
        let consistent: Vec<usize> = (0..options.len()).filter(|&o| options.pi(o, s, a) > T::zero()).collect();
        let targets: Vec<T> = consistent
            .iter()
            .map(|&o| r + gamma * self.arrival_value(options, o, s_next, terminal))
            .collect();
        for (&o, &t) in consistent.iter().zip(&targets) {
            self.move_towards(s, o, t);
        }
        Ok(consistent.len())
    }
}
