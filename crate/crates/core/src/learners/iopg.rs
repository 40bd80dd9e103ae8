//! Recursive posterior over the active option given the observed
//! state-action history, and a runner that tracks it alongside a fixed
//! option model.

use rand::{Rng, RngCore};

use super::runner::EnvRunner;
use super::Learner;
use crate::error::{Error, Result};
use crate::funcapprox::{ActionSpace, ArchitectureSpec, OptionArchitecture};
use crate::mdp::{sample_categorical, OptionModel, OptionSlot, TabularMdp};
use crate::scalar::Real;

/// `m_t(o) = p(O_t = o | S_0, A_0, ..., S_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorState<T> {
    pub m: Vec<T>,
    pub t: usize,
}

impl<T: Real> PosteriorState<T> {
    /// `m_0 = pi(. | s_0)`.
    pub fn initial(model: &OptionModel<T>, s0: usize) -> Result<Self> {
        Error::check_index("state", s0, model.n_states())?;
        Ok(Self { m: model.master.row(s0).to_vec(), t: 0 })
    }
}

/// One step of the recursion on the observation `(s_prev, a_prev, s)`:
/// `w(o') ~ m(o') pi_o'(a_prev | s_prev)`, then
/// `m'(o) = sum_o' w(o') [(1 - beta_o'(s)) 1[o = o'] + beta_o'(s) pi(o | s)]`.
pub fn iopg_posterior_step<T: Real>(
    posterior: &PosteriorState<T>,
    model: &OptionModel<T>,
    s_prev: usize,
    a_prev: usize,
    s: usize,
) -> Result<PosteriorState<T>> {
    let (ns, na, no) = (model.n_states(), model.n_actions(), model.n_options());
    Error::check_index("state", s_prev, ns)?;
    Error::check_index("state", s, ns)?;
    Error::check_index("action", a_prev, na)?;
    if posterior.m.len() != no {
        return Err(Error::Shape { expected: no, got: posterior.m.len() });
    }
    let mut w: Vec<T> = (0..no).map(|o| posterior.m[o] * model.options.pi(o, s_prev, a_prev)).collect();
    let total: T = w.iter().copied().sum();
    if total <= T::zero() {
        return Err(Error::ZeroProbability(format!(
            "no option takes action {a_prev} in state {s_prev} under the current posterior"
        )));
    }
    w.iter_mut().for_each(|x| *x /= total);
    let master = model.master.row(s);
    let mut m = vec![T::zero(); no];
    for (o_prev, &weight) in w.iter().enumerate() {
        if weight == T::zero() {
            continue;
        }
        let beta = model.options.beta(OptionSlot::Real(o_prev), s);
        m[o_prev] += weight * (T::one() - beta);
        for (o, &p) in master.iter().enumerate() {
            m[o] += weight * beta * p;
        }
    }
    Ok(PosteriorState { m, t: posterior.t + 1 })
}

/// Executes a fixed, randomly parameterised option model with call-and-return
/// and keeps each worker's posterior up to date. Nothing is learned.
#[derive(Debug, Clone)]
pub struct PosteriorDemo<T> {
    pub model: OptionModel<T>,
    current: Vec<Option<usize>>,
    last: Vec<Option<(usize, usize)>>,
    posterior: Vec<Option<PosteriorState<T>>>,
    true_mass: T,
    observations: u64,
}

impl<T: Real> PosteriorDemo<T> {
    pub fn new<R: Rng + ?Sized>(mdp: &TabularMdp<T>, n_options: usize, n_workers: usize, rng: &mut R) -> Result<Self> {
        let mut arch = OptionArchitecture::new(
            &ArchitectureSpec::default(),
            mdp.n_states(),
            ActionSpace::Discrete(mdp.n_actions()),
            n_options,
            rng,
        )?;
        arch.params.as_mut_slice().iter_mut().for_each(|p| *p = T::lit(rng.random_range(-2.0..2.0)));
        Ok(Self {
            model: arch.to_model(mdp)?,
            current: vec![None; n_workers],
            last: vec![None; n_workers],
            posterior: vec![None; n_workers],
            true_mass: T::zero(),
            observations: 0,
        })
    }

    pub fn posterior(&self, w: usize) -> Option<&PosteriorState<T>> {
        self.posterior.get(w).and_then(Option::as_ref)
    }

    /// Average posterior mass on the option actually executing.
    pub fn mean_true_option_mass(&self) -> T {
        if self.observations == 0 {
            T::zero()
        } else {
            self.true_mass / T::lit(self.observations as f64)
        }
    }
}

impl<T: Real> Learner<T> for PosteriorDemo<T> {
    fn step(&mut self, runner: &mut EnvRunner<T>, rng: &mut dyn RngCore) -> Result<()> {
        for w in 0..runner.n_workers() {
            let s = runner.state(w);
            let fresh = runner.is_fresh(w);
            let prev = if fresh { OptionSlot::Dummy } else { self.current[w].map_or(OptionSlot::Dummy, OptionSlot::Real) };
            let option = sample_categorical(&self.model.option_transition_kernel(s, prev)?, rng);
            let post = match (fresh, &self.posterior[w], self.last[w]) {
                (false, Some(m), Some((s_prev, a_prev))) => iopg_posterior_step(m, &self.model, s_prev, a_prev, s)?,
                _ => PosteriorState::initial(&self.model, s)?,
            };
            self.true_mass += post.m[option];
            self.observations += 1;
            let action = sample_categorical(self.model.options.get(option)?.pi().row(s), rng);
            runner.step(w, action, rng)?;
            self.posterior[w] = Some(post);
            self.current[w] = Some(option);
            self.last[w] = Some((s, action));
        }
        Ok(())
    }

    fn active_option(&self, w: usize) -> Option<usize> {
        self.current.get(w).copied().flatten()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{make_environment, EnvParams, MasterPolicy, OptionDef, OptionSet, PolicyTable};
    use crate::oracle::{option_posterior_exact, random_model, History, InstanceSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn recursion_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let spec = InstanceSpec { terminal_prob: 0.0, ..Default::default() };
        let mut checked = 0;
        while checked < 30 {
            let m = random_model::<f64, _>(&mut rng, &spec).unwrap();
            let traj = m.sample_episode(&mut rng, 4).unwrap();
            let mut post = PosteriorState::initial(&m, traj.states[0]).unwrap();
            for t in 0..=traj.actions.len() {
                let h = History::new(traj.states[..=t].to_vec(), traj.actions[..t].to_vec()).unwrap();
                let exact = option_posterior_exact(&m, &h).unwrap();
                let diff = exact.iter().zip(&post.m).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(diff < 1e-10, "t={t}: {diff}");
                if t < traj.actions.len() {
                    post = iopg_posterior_step(&post, &m, traj.states[t], traj.actions[t], traj.states[t + 1]).unwrap();
                }
            }
            checked += 1;
        }
    }

    #[test]
    fn identical_policies_mix_by_termination_only() {
        let pi = PolicyTable::from_rows(&[vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap();
        let o0 = OptionDef::new(pi.clone(), vec![0.2, 0.5]).unwrap();
        let o1 = OptionDef::new(pi, vec![0.9, 0.1]).unwrap();
        let options = OptionSet::new(vec![o0, o1]).unwrap();
        let master = MasterPolicy::new(PolicyTable::from_rows(&[vec![0.25, 0.75], vec![0.5, 0.5]]).unwrap());
        let env = make_environment::<f64>("chain", &EnvParams { chain_length: Some(1), ..Default::default() }).unwrap();
        let model = OptionModel::new(env.mdp, options, master).unwrap();
        let m0 = PosteriorState { m: vec![0.4, 0.6], t: 0 };
        let m1 = iopg_posterior_step(&m0, &model, 0, 1, 1).unwrap();
        let expect0 = 0.4 * (1.0 - 0.5) + 0.4 * 0.5 * 0.5 + 0.6 * 0.1 * 0.5;
        assert!((m1.m[0] - expect0).abs() < 1e-15);
        assert!((m1.m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn impossible_history_is_an_error() {
        let options = crate::mdp::repeat_action_options::<f64>(2, 2, 2, 0.0).unwrap();
        let env = make_environment::<f64>("chain", &EnvParams { chain_length: Some(1), ..Default::default() }).unwrap();
        let model = OptionModel::new(env.mdp, options, MasterPolicy::uniform(2, 2)).unwrap();
        // only option 0 takes action 0, and it never terminates
        let m = PosteriorState { m: vec![1.0, 0.0], t: 0 };
        let next = iopg_posterior_step(&m, &model, 0, 0, 0).unwrap();
        assert_eq!(next.m, vec![1.0, 0.0]);
        assert!(matches!(iopg_posterior_step(&m, &model, 0, 1, 1), Err(Error::ZeroProbability(_))));
    }
}
