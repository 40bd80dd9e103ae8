//! Random small option models for exhaustive and property suites.

use rand::Rng;

use crate::error::Result;
use crate::mdp::{MasterPolicy, OptionDef, OptionModel, OptionSet, PolicyTable, TabularMdp};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceSpec {
    pub min_states: usize,
    pub max_states: usize,
    pub max_actions: usize,
    pub max_options: usize,
    /// Chance that the last state is made absorbing.
    pub terminal_prob: f64,
    pub gamma: (f64, f64),
}

impl Default for InstanceSpec {
    fn default() -> Self {
        Self {
            min_states: 1,
            max_states: 4,
            max_actions: 3,
            max_options: 3,
            terminal_prob: 0.5,
            gamma: (0.5, 0.95),
        }
    }
}

/// Distribution with a random support (at least one entry) and random
/// weights on it.
pub fn random_distribution<R: Rng + ?Sized>(rng: &mut R, n: usize, keep: f64) -> Vec<f64> {
    let mut w: Vec<f64> =
        (0..n).map(|_| if rng.random_bool(keep) { rng.random_range(0.05..1.0) } else { 0.0 }).collect();
    if w.iter().all(|&x| x == 0.0) {
        w[rng.random_range(0..n)] = 1.0;
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

fn random_policy_row<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    if rng.random_bool(0.3) {
        let mut row = vec![0.0; n];
        row[rng.random_range(0..n)] = 1.0;
        row
    } else {
        random_distribution(rng, n, 0.7)
    }
}

fn random_beta<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    if u < 0.2 {
        0.0
    } else if u < 0.4 {
        1.0
    } else {
        rng.random()
    }
}

fn cast<T: Real>(xs: Vec<f64>) -> Vec<T> {
    xs.into_iter().map(T::lit).collect()
}

/// Random MDP with sparse transitions, rewards in `[-1, 1]`, options whose
/// terminations include exact zeros and ones, and a sparse master policy.
pub fn random_model<T: Real, R: Rng + ?Sized>(rng: &mut R, spec: &InstanceSpec) -> Result<OptionModel<T>> {
    let ns = rng.random_range(spec.min_states.max(1)..=spec.max_states.max(spec.min_states.max(1)));
    let na = rng.random_range(1..=spec.max_actions.max(1));
    let no = rng.random_range(1..=spec.max_options.max(1));
    let has_terminal = ns >= 2 && rng.random_bool(spec.terminal_prob);
    let mut terminal = vec![false; ns];
    if has_terminal {
        terminal[ns - 1] = true;
    }
    let mut transition = Vec::with_capacity(ns * na * ns);
    let mut reward = Vec::with_capacity(ns * na);
    for s in 0..ns {
        for _ in 0..na {
            if terminal[s] {
                let mut row = vec![0.0; ns];
                row[s] = 1.0;
                transition.extend(row);
                reward.push(0.0);
            } else {
                transition.extend(random_distribution(rng, ns, 0.6));
                reward.push(rng.random_range(-1.0..=1.0));
            }
        }
    }
    let live = if has_terminal { ns - 1 } else { ns };
    let mut initial = random_distribution(rng, live, 0.7);
    initial.resize(ns, 0.0);
    let gamma = rng.random_range(spec.gamma.0..=spec.gamma.1);
    let mdp = TabularMdp::new(ns, na, cast(transition), cast(reward), cast(initial), T::lit(gamma), terminal)?;

    let options = (0..no)
        .map(|_| {
            let pi: Vec<f64> = (0..ns).flat_map(|_| random_policy_row(rng, na)).collect();
            let beta: Vec<f64> = (0..ns).map(|_| random_beta(rng)).collect();
            OptionDef::new(PolicyTable::new(ns, na, cast(pi))?, cast(beta))
        })
        .collect::<Result<Vec<_>>>()?;
    let master: Vec<f64> = (0..ns).flat_map(|_| random_distribution(rng, no, 0.7)).collect();
    OptionModel::new(mdp, OptionSet::new(options)?, MasterPolicy::new(PolicyTable::new(ns, no, cast(master))?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_models_respect_size_caps() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = InstanceSpec::default();
        for _ in 0..200 {
            let m = random_model::<f64, _>(&mut rng, &spec).unwrap();
            assert!(m.n_states() <= 4 && m.n_actions() <= 3 && m.n_options() <= 3);
            let g = m.mdp.gamma();
            assert!((0.5..=0.95).contains(&g));
        }
    }
}
