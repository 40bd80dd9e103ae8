//! Brute-force posterior over the active option given a state-action history.

use crate::error::{Error, Result};
use crate::mdp::{FiniteMdp, OptionModel, OptionSlot};
use crate::scalar::Real;

/// `S_0, A_0, S_1, ..., A_{t-1}, S_t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct History {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
}

impl History {
    pub fn new(states: Vec<usize>, actions: Vec<usize>) -> Result<Self> {
        if states.is_empty() || actions.len() + 1 != states.len() {
            return Err(Error::InvalidModel("history needs one more state than actions".into()));
        }
        Ok(Self { states, actions })
    }

    pub fn t(&self) -> usize {
        self.actions.len()
    }
}

/// `m_t(o) = p(O_t = o | H_t)` by summing over every option sequence
/// `O_0..O_t` (there are `|O|^(t+1)` of them).
pub fn option_posterior_exact<T: Real>(model: &OptionModel<T>, history: &History) -> Result<Vec<T>> {
    let (ns, na, no) = (model.n_states(), model.n_actions(), model.n_options());
    history.states.iter().try_for_each(|&s| Error::check_index("state", s, ns))?;
    history.actions.iter().try_for_each(|&a| Error::check_index("action", a, na))?;
    let t = history.t();
    let mut env_factor = model.mdp.initial()[history.states[0]];
    for k in 0..t {
        env_factor *= model.mdp.transition_row(history.states[k], history.actions[k])[history.states[k + 1]];
    }
    let mut mass = vec![T::zero(); no];
    if env_factor > T::zero() {
        let total_seqs = no.pow(t as u32 + 1);
        let mut seq = vec![0usize; t + 1];
        for code in 0..total_seqs {
            let mut c = code;
            for slot in seq.iter_mut() {
                *slot = c % no;
                c /= no;
            }
            let mut p = T::one();
            let mut prev = OptionSlot::Dummy;
            for (k, &o) in seq.iter().enumerate() {
                let s = history.states[k];
                p *= model.option_kernel_unchecked(s, prev)[o];
                if k < t {
                    p *= model.options.pi(o, s, history.actions[k]);
                }
                if p == T::zero() {
                    break;
                }
                prev = OptionSlot::Real(o);
            }
            mass[seq[t]] += p;
        }
    }
    let total: T = mass.iter().copied().sum();
    if total <= T::zero() {
        return Err(Error::ZeroProbability("history has zero probability under the option model".into()));
    }
    Ok(mass.into_iter().map(|m| m / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{MasterPolicy, OptionDef, OptionSet, PolicyTable, TabularMdp};

    fn model(beta: f64) -> OptionModel<f64> {
        // two states, two actions, both actions move uniformly
        let mdp = TabularMdp::new(2, 2, vec![0.5; 8], vec![0.0; 4], vec![1.0, 0.0], 0.9, vec![false; 2]).unwrap();
        let o0 = OptionDef::new(PolicyTable::deterministic(2, 2, |_| 0), vec![beta; 2]).unwrap();
        let o1 = OptionDef::new(PolicyTable::uniform(2, 2), vec![beta; 2]).unwrap();
        OptionModel::new(mdp, OptionSet::new(vec![o0, o1]).unwrap(), MasterPolicy::uniform(2, 2)).unwrap()
    }

    #[test]
    fn no_evidence_gives_master_policy() {
        let m = option_posterior_exact(&model(0.3), &History::new(vec![0], vec![]).unwrap()).unwrap();
        assert_eq!(m, vec![0.5, 0.5]);
    }

    #[test]
    fn action_only_one_option_takes_pins_it_without_termination() {
        let h = History::new(vec![0, 1, 0], vec![1, 0]).unwrap();
        let m = option_posterior_exact(&model(0.0), &h).unwrap();
        assert_eq!(m, vec![0.0, 1.0]);
    }

    #[test]
    fn impossible_history_is_an_error() {
        let h = History::new(vec![1], vec![]).unwrap();
        assert!(matches!(option_posterior_exact(&model(0.3), &h), Err(Error::ZeroProbability(_))));
    }
}
