//! Exact Option-Critic gradients assembled from exact values and occupancy
//! measures, for parameterizations with discrete intra-option policies over
//! tabular states.
//!
//! Intra-option gradient, rooted at a state-option pair:
//! `grad_nu q(s0,o0) = sum_{s,o} rho(s,o | s0,o0) sum_a q(s,o,a) grad pi_o(a|s)`.
//!
//! Termination gradient, rooted at an arrival pair:
//! `grad_phi u(o0,s1) = - sum_{o,s'} rho((o,s') | (o0,s1)) (q(s',o) - v(s')) grad beta_o(s')`,
//! where the arrival occupancy follows `(o,s') -> (o',s'')` with probability
//! `p(o'|s',o) p(s''|s',o')`.

use crate::augmented::low_index;
use crate::error::{Error, Result};
use crate::funcapprox::{Obs, OptionArchitecture};
use crate::mdp::{OptionModel, TabularMdp};
use crate::scalar::{softmax, Real};

use super::evaluation::{arrival_occupancy_from, exact_policy_evaluation, occupancy_from, ExactValues};

/// Gradients with respect to the intra-option (`nu`) and termination (`phi`)
/// sections of the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OcGradients<T> {
    pub grad_nu: Vec<T>,
    pub grad_phi: Vec<T>,
}

struct Prepared<T> {
    model: OptionModel<T>,
    exact: ExactValues<T>,
}

fn prepare<T: Real>(arch: &OptionArchitecture<T>, mdp: &TabularMdp<T>) -> Result<Prepared<T>> {
    if !arch.intra_head().is_discrete() {
        return Err(Error::Unsupported("exact option-critic gradients need discrete intra-option policies".into()));
    }
    let model = arch.to_model(mdp)?;
    let exact = exact_policy_evaluation(&model)?;
    Ok(Prepared { model, exact })
}

fn intra_from<T: Real>(arch: &OptionArchitecture<T>, prep: &Prepared<T>, start: &[T]) -> Result<Vec<T>> {
    let (ns, no, na) = (prep.model.n_states(), prep.model.n_options(), prep.model.n_actions());
    let rho = occupancy_from(&prep.model, start)?;
    let mut grad = vec![T::zero(); arch.n_params()];
    let head = arch.intra_head();
    for o in 0..no {
        let range = arch.nu_range(o);
        let params = &arch.params.as_slice()[range.clone()];
        for s in 0..ns {
            let weight = rho.get(s, o);
            if weight == T::zero() {
                continue;
            }
            let fwd = head.forward(params, Obs::Index(s))?;
            let pi = softmax(&fwd.output);
            let q = prep.exact.q(s, o);
            // sum_a q(s,o,a) d pi(a) / d logits = pi * (q(s,o,.) - q(s,o))
            let d: Vec<T> = (0..na).map(|a| weight * pi[a] * (prep.exact.q_action(s, o, a) - q)).collect();
            head.backward(params, &fwd, &d, &mut grad[range.clone()])?;
        }
    }
    Ok(grad[arch.params.nu_range()].to_vec())
}

fn termination_from<T: Real>(arch: &OptionArchitecture<T>, prep: &Prepared<T>, start: &[T]) -> Result<Vec<T>> {
    let (ns, no) = (prep.model.n_states(), prep.model.n_options());
    let rho = arrival_occupancy_from(&prep.model, start)?;
    let mut grad = vec![T::zero(); arch.n_params()];
    for o in 0..no {
        for s in 0..ns {
            let weight = rho.get(s, o);
            if weight == T::zero() {
                continue;
            }
            let advantage = prep.exact.q(s, o) - prep.exact.v[s];
            arch.grad_beta(o, Obs::Index(s), -weight * advantage, &mut grad)?;
        }
    }
    Ok(grad[arch.params.phi_range()].to_vec())
}

fn one_hot<T: Real>(n: usize, i: usize) -> Vec<T> {
    let mut v = vec![T::zero(); n];
    v[i] = T::one();
    v
}

/// `grad_nu q(s0, o0)`.
pub fn intra_option_gradient_at<T: Real>(
    arch: &OptionArchitecture<T>,
    mdp: &TabularMdp<T>,
    s0: usize,
    o0: usize,
) -> Result<Vec<T>> {
    let prep = prepare(arch, mdp)?;
    let (ns, no) = (prep.model.n_states(), prep.model.n_options());
    Error::check_index("state", s0, ns)?;
    Error::check_index("option", o0, no)?;
    intra_from(arch, &prep, &one_hot(ns * no, low_index(ns, s0, o0)))
}

/// `grad_phi u(o0, s1)`.
pub fn termination_gradient_at<T: Real>(
    arch: &OptionArchitecture<T>,
    mdp: &TabularMdp<T>,
    s1: usize,
    o0: usize,
) -> Result<Vec<T>> {
    let prep = prepare(arch, mdp)?;
    let (ns, no) = (prep.model.n_states(), prep.model.n_options());
    Error::check_index("state", s1, ns)?;
    Error::check_index("option", o0, no)?;
    termination_from(arch, &prep, &one_hot(ns * no, low_index(ns, s1, o0)))
}

/// Gradients of `v(s0)` with the master policy held fixed: the intra-option
/// term averages the pair roots over `O_0 ~ pi(.|s0)`, the termination term
/// weights arrival roots `(o, s1)` by `gamma pi(o|s0) p(s1|s0,o)`.
pub fn oc_gradients_exact<T: Real>(arch: &OptionArchitecture<T>, mdp: &TabularMdp<T>, s0: usize) -> Result<OcGradients<T>> {
    let prep = prepare(arch, mdp)?;
    let (ns, no) = (prep.model.n_states(), prep.model.n_options());
    Error::check_index("state", s0, ns)?;
    let gamma = mdp.gamma();
    let mut pair_start = vec![T::zero(); ns * no];
    let mut arrival_start = vec![T::zero(); ns * no];
    for o in 0..no {
        let w = prep.model.master.prob(s0, o);
        pair_start[low_index(ns, s0, o)] = w;
        let (row, _) = prep.model.state_option_kernel(s0, o)?;
        for (s1, &p) in row.iter().enumerate() {
            arrival_start[low_index(ns, s1, o)] += gamma * w * p;
        }
    }
    Ok(OcGradients {
        grad_nu: intra_from(arch, &prep, &pair_start)?,
        grad_phi: termination_from(arch, &prep, &arrival_start)?,
    })
}

/// Exact `v(s0)`, `q(s, o)` and `u(o, s')` of the model the parameters encode;
/// the objectives differentiated above.
pub fn exact_values_of<T: Real>(arch: &OptionArchitecture<T>, mdp: &TabularMdp<T>) -> Result<ExactValues<T>> {
    Ok(prepare(arch, mdp)?.exact)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcapprox::{finite_difference, relative_error, ActionSpace, ArchitectureSpec, ParamKind};
    use crate::oracle::instances::{random_model, InstanceSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64) -> (OptionArchitecture<f64>, TabularMdp<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_model::<f64, _>(&mut rng, &InstanceSpec { min_states: 2, ..Default::default() }).unwrap();
        let mut arch = OptionArchitecture::new(
            &ArchitectureSpec::default(),
            m.n_states(),
            ActionSpace::Discrete(m.n_actions()),
            m.n_options(),
            &mut rng,
        )
        .unwrap();
        for p in arch.params.as_mut_slice() {
            *p = rng.random_range(-2.0..2.0);
        }
        (arch, m.mdp)
    }

    fn with_flat(arch: &OptionArchitecture<f64>, flat: &[f64]) -> OptionArchitecture<f64> {
        let mut a = arch.clone();
        a.params.as_mut_slice().copy_from_slice(flat);
        a
    }

    #[test]
    fn rooted_gradients_match_finite_differences() {
        for seed in 0..10 {
            let (arch, mdp) = setup(seed);
            let flat = arch.params.as_slice().to_vec();
            let nu = arch.params.nu_range();
            let phi = arch.params.phi_range();
            let g_nu = intra_option_gradient_at(&arch, &mdp, 0, 0).unwrap();
            let fd = finite_difference(|x| exact_values_of(&with_flat(&arch, x), &mdp).unwrap().q(0, 0), &flat, 1e-5);
            assert!(relative_error(&g_nu, &fd[nu.clone()], 1e-6) < 1e-4, "seed {seed}");
            let g_phi = termination_gradient_at(&arch, &mdp, 1, 0).unwrap();
            let fd = finite_difference(|x| exact_values_of(&with_flat(&arch, x), &mdp).unwrap().u(0, 1), &flat, 1e-5);
            // at an absorbing root both sides vanish up to round-off
            assert!(relative_error(&g_phi, &fd[phi.clone()], 1e-6) < 1e-4, "seed {seed}");
        }
    }

    #[test]
    fn zero_advantage_gives_zero_termination_gradient() {
        // one option: q(s, o) = v(s) everywhere
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let spec = InstanceSpec { max_options: 1, ..Default::default() };
        let m = random_model::<f64, _>(&mut rng, &spec).unwrap();
        let mut arch = OptionArchitecture::new(
            &ArchitectureSpec::default(),
            m.n_states(),
            ActionSpace::Discrete(m.n_actions()),
            1,
            &mut rng,
        )
        .unwrap();
        arch.params.as_mut_slice().iter_mut().for_each(|p| *p = rng.random_range(-1.0..1.0));
        let g = oc_gradients_exact(&arch, &m.mdp, 0).unwrap();
        assert!(g.grad_phi.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn gaussian_intra_policies_are_unsupported() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = ArchitectureSpec { kind: ParamKind::LinearGaussian, ..Default::default() };
        let arch = OptionArchitecture::<f64>::new(&spec, 2, ActionSpace::Continuous(1), 2, &mut rng).unwrap();
        let (_, mdp) = setup(0);
        assert!(matches!(oc_gradients_exact(&arch, &mdp, 0), Err(Error::Unsupported(_))));
    }
}
