//! Exact policy evaluation by dense linear solves.
//!
//! State-option pairs are indexed like low-MDP states, `o * |S| + s`.
//! Arrival pairs `(o, s')` use the same layout.

use crate::augmented::low_index;
use crate::error::{Error, Result};
use crate::linalg::{self, Lu};
use crate::mdp::{FiniteMdp, MasterPolicy, OptionModel, OptionSlot, PolicyTable};
use crate::scalar::Real;

use super::enumerate::Chains;

fn warn_if_ill_conditioned<T: Real>(gamma: T) {
    if gamma.as_f64() > 0.999 {
        log::warn!("discount {gamma} is close to 1; the value system is badly conditioned");
    }
}

/// Values of the call-and-return process under a fixed master policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactValues<T> {
    pub n_states: usize,
    pub n_options: usize,
    pub n_actions: usize,
    /// `q(s, o)` at `o * |S| + s`.
    pub q_so: Vec<T>,
    /// `q(s, o, a)` at `(o * |S| + s) * |A| + a`.
    pub q_soa: Vec<T>,
    pub v: Vec<T>,
    /// `u(o, s')` at `o * |S| + s'`.
    pub u: Vec<T>,
    /// Max-norm residual of the solved fixed point.
    pub bellman_residual: T,
}

impl<T: Real> ExactValues<T> {
    pub fn q(&self, s: usize, o: usize) -> T {
        self.q_so[low_index(self.n_states, s, o)]
    }

    pub fn q_action(&self, s: usize, o: usize, a: usize) -> T {
        self.q_soa[low_index(self.n_states, s, o) * self.n_actions + a]
    }

    pub fn u(&self, o: usize, s: usize) -> T {
        self.u[low_index(self.n_states, s, o)]
    }

    /// Largest violation among `q(s,o) = sum_a pi_o q(s,o,a)`,
    /// `v(s) = sum_o pi q(s,o)` and `u = (1 - beta) q + beta v`.
    pub fn identity_residual(&self, model: &OptionModel<T>) -> T {
        let (ns, no, na) = (self.n_states, self.n_options, self.n_actions);
        let mut worst = T::zero();
        for s in 0..ns {
            let v: T = (0..no).map(|o| model.master.prob(s, o) * self.q(s, o)).sum();
            worst = worst.max((v - self.v[s]).abs());
            for o in 0..no {
                let q: T = (0..na).map(|a| model.options.pi(o, s, a) * self.q_action(s, o, a)).sum();
                worst = worst.max((q - self.q(s, o)).abs());
                let beta = model.options.beta(OptionSlot::Real(o), s);
                let u = (T::one() - beta) * self.q(s, o) + beta * self.v[s];
                worst = worst.max((u - self.u(o, s)).abs());
            }
        }
        worst
    }
}

/// `P[(s,o) -> (s',o')] = p(s'|s,o) p(o'|s',o)` as a dense row-major matrix
/// together with the rewards `r(s,o)`.
pub fn state_option_chain<T: Real>(model: &OptionModel<T>) -> Result<(Vec<T>, Vec<T>)> {
    let (ns, no) = (model.n_states(), model.n_options());
    let n = ns * no;
    let arrival: Vec<Vec<T>> = (0..n)
        .map(|i| model.option_kernel_unchecked(i % ns, OptionSlot::Real(i / ns)))
        .collect();
    let mut p = vec![T::zero(); n * n];
    let mut r = vec![T::zero(); n];
    for o in 0..no {
        for s in 0..ns {
            let i = low_index(ns, s, o);
            let (row, rew) = model.state_option_kernel(s, o)?;
            r[i] = rew;
            for (s2, &ps) in row.iter().enumerate() {
                if ps == T::zero() {
                    continue;
                }
                for (o2, &po) in arrival[low_index(ns, s2, o)].iter().enumerate() {
                    p[i * n + low_index(ns, s2, o2)] += ps * po;
                }
            }
        }
    }
    Ok((p, r))
}

/// `P[(o,s') -> (o',s'')] = p(o'|s',o) p(s''|s',o')`: the high chain
/// restricted to arrival pairs.
pub fn arrival_chain<T: Real>(model: &OptionModel<T>) -> Result<Vec<T>> {
    let (ns, no) = (model.n_states(), model.n_options());
    let n = ns * no;
    let kernels: Vec<Vec<T>> = (0..n)
        .map(|i| model.state_option_kernel(i % ns, i / ns).map(|(row, _)| row))
        .collect::<Result<_>>()?;
    let mut p = vec![T::zero(); n * n];
    for o in 0..no {
        for s in 0..ns {
            let i = low_index(ns, s, o);
            for (o2, &po) in model.option_kernel_unchecked(s, OptionSlot::Real(o)).iter().enumerate() {
                if po == T::zero() {
                    continue;
                }
                for (s2, &ps) in kernels[low_index(ns, s, o2)].iter().enumerate() {
                    p[i * n + low_index(ns, s2, o2)] += po * ps;
                }
            }
        }
    }
    Ok(p)
}

/// `I - gamma P`.
fn resolvent<T: Real>(n: usize, p: &[T], gamma: T) -> Vec<T> {
    let mut a: Vec<T> = p.iter().map(|&x| -gamma * x).collect();
    for i in 0..n {
        a[i * n + i] += T::one();
    }
    a
}

fn transpose<T: Real>(n: usize, a: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            out[j * n + i] = a[i * n + j];
        }
    }
    out
}

/// Solves `q = r + gamma P q` on state-option pairs, then derives `q(s,o,a)`,
/// `v` and `u` from it.
pub fn exact_policy_evaluation<T: Real>(model: &OptionModel<T>) -> Result<ExactValues<T>> {
    let (ns, no, na) = (model.n_states(), model.n_options(), model.n_actions());
    let gamma = model.mdp.gamma();
    warn_if_ill_conditioned(gamma);
    let n = ns * no;
    let (p, r) = state_option_chain(model)?;
    let q_so = linalg::solve(n, resolvent(n, &p, gamma), &r)?;

    let mut bellman_residual = T::zero();
    for i in 0..n {
        let next: T = (0..n).map(|j| p[i * n + j] * q_so[j]).sum();
        bellman_residual = bellman_residual.max((r[i] + gamma * next - q_so[i]).abs());
    }

    let v: Vec<T> = (0..ns).map(|s| (0..no).map(|o| model.master.prob(s, o) * q_so[low_index(ns, s, o)]).sum()).collect();
    let mut u = vec![T::zero(); n];
    for o in 0..no {
        for s in 0..ns {
            let beta = model.options.beta(OptionSlot::Real(o), s);
            u[low_index(ns, s, o)] = (T::one() - beta) * q_so[low_index(ns, s, o)] + beta * v[s];
        }
    }
    let mut q_soa = vec![T::zero(); n * na];
    for o in 0..no {
        for s in 0..ns {
            for a in 0..na {
                let next: T = model
                    .mdp
                    .transition_row(s, a)
                    .iter()
                    .enumerate()
                    .map(|(s2, &ps)| ps * u[low_index(ns, s2, o)])
                    .sum();
                q_soa[low_index(ns, s, o) * na + a] = model.mdp.reward(s, a) + gamma * next;
            }
        }
    }
    Ok(ExactValues { n_states: ns, n_options: no, n_actions: na, q_so, q_soa, v, u, bellman_residual })
}

/// Unnormalised discounted visitation of state-option pairs,
/// `rho(s,o) = sum_t gamma^t Pr[(S_t, O_t) = (s,o)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyTable<T> {
    pub n_states: usize,
    pub n_options: usize,
    /// `rho(s, o)` at `o * |S| + s`.
    pub rho: Vec<T>,
}

impl<T: Real> OccupancyTable<T> {
    pub fn get(&self, s: usize, o: usize) -> T {
        self.rho[low_index(self.n_states, s, o)]
    }

    pub fn total(&self) -> T {
        self.rho.iter().copied().sum()
    }
}

/// Solves `(I - gamma P)^T rho = d0` for any start distribution over pairs.
fn discounted_visits<T: Real>(n: usize, p: &[T], gamma: T, start: &[T]) -> Result<Vec<T>> {
    if start.len() != n {
        return Err(Error::Shape { expected: n, got: start.len() });
    }
    warn_if_ill_conditioned(gamma);
    Lu::factor(n, transpose(n, &resolvent(n, p, gamma)))?.solve(start)
}

/// Occupancy from a start distribution over state-option pairs (indexed
/// `o * |S| + s`).
pub fn occupancy_from<T: Real>(model: &OptionModel<T>, start: &[T]) -> Result<OccupancyTable<T>> {
    let (p, _) = state_option_chain(model)?;
    let n = model.n_states() * model.n_options();
    let rho = discounted_visits(n, &p, model.mdp.gamma(), start)?;
    Ok(OccupancyTable { n_states: model.n_states(), n_options: model.n_options(), rho })
}

/// Occupancy rooted at the pair `(s, o)`.
pub fn occupancy<T: Real>(model: &OptionModel<T>, start: (usize, usize)) -> Result<OccupancyTable<T>> {
    let (ns, no) = (model.n_states(), model.n_options());
    Error::check_index("state", start.0, ns)?;
    Error::check_index("option", start.1, no)?;
    let mut d0 = vec![T::zero(); ns * no];
    d0[low_index(ns, start.0, start.1)] = T::one();
    occupancy_from(model, &d0)
}

/// Discounted visitation of arrival pairs `(o, s')` from a start
/// distribution over arrival pairs; `get(s', o)` reads `rho(o, s')`.
pub fn arrival_occupancy_from<T: Real>(model: &OptionModel<T>, start: &[T]) -> Result<OccupancyTable<T>> {
    let p = arrival_chain(model)?;
    let n = model.n_states() * model.n_options();
    let rho = discounted_visits(n, &p, model.mdp.gamma(), start)?;
    Ok(OccupancyTable { n_states: model.n_states(), n_options: model.n_options(), rho })
}

/// State values of a Markov policy on any finite MDP.
pub fn policy_values<T: Real, M: FiniteMdp<T>>(mdp: &M, policy: &PolicyTable<T>) -> Result<Vec<T>> {
    let (n, na) = (mdp.n_states(), mdp.n_actions());
    if policy.n_rows() != n || policy.n_cols() != na {
        return Err(Error::Shape { expected: n * na, got: policy.n_rows() * policy.n_cols() });
    }
    warn_if_ill_conditioned(mdp.gamma());
    let mut p = vec![T::zero(); n * n];
    let mut r = vec![T::zero(); n];
    for s in 0..n {
        for (a, &pa) in policy.row(s).iter().enumerate() {
            if pa == T::zero() {
                continue;
            }
            r[s] += pa * mdp.reward(s, a);
            for (s2, &ps) in mdp.transition_row(s, a).iter().enumerate() {
                p[s * n + s2] += pa * ps;
            }
        }
    }
    linalg::solve(n, resolvent(n, &p, mdp.gamma()), &r)
}

/// How far the high-MDP critic is from the one synthesised out of the
/// low-MDP critic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticIdentityReport<T> {
    /// `max |v_high((o,s')) - sum_o' pi_high(o'|(o,s')) v_low((s',o'))|`
    /// over every high state, `#` included.
    pub residual: T,
    /// `max |v_high((o,s')) - u(o,s')|` over real options.
    pub u_gap: T,
    /// `max |v_high((#,s)) - v(s)|`.
    pub v_gap: T,
}

/// Evaluates both augmented MDPs with independent solves and compares the
/// high critic against the low critic pushed through the high policy.
pub fn critic_identity_residual<T: Real>(model: &OptionModel<T>) -> Result<CriticIdentityReport<T>> {
    let chains = Chains::new(model.clone())?;
    let v_high = policy_values(&chains.high, chains.high_policy.table())?;
    let v_low = policy_values(&chains.low, chains.low_policy.table())?;
    let exact = exact_policy_evaluation(model)?;
    let (ns, no) = (model.n_states(), model.n_options());
    let mut report = CriticIdentityReport { residual: T::zero(), u_gap: T::zero(), v_gap: T::zero() };
    for slot_i in 0..=no {
        let slot = OptionSlot::from_slot_index(slot_i);
        for s in 0..ns {
            let vh = v_high[chains.high.index(slot, s)];
            let synth: T = chains
                .high_policy
                .row(slot, s)
                .iter()
                .enumerate()
                .map(|(o2, &p)| p * v_low[chains.low.index(s, o2)])
                .sum();
            report.residual = report.residual.max((vh - synth).abs());
            match slot {
                OptionSlot::Dummy => report.v_gap = report.v_gap.max((vh - exact.v[s]).abs()),
                OptionSlot::Real(o) => report.u_gap = report.u_gap.max((vh - exact.u(o, s)).abs()),
            }
        }
    }
    Ok(report)
}

/// Greedy master policy over `q(s, .)`, ties to the lowest option index.
pub fn greedy_master<T: Real>(n_states: usize, n_options: usize, q_so: &[T]) -> MasterPolicy<T> {
    let table = PolicyTable::deterministic(n_states, n_options, |s| {
        let mut best = 0;
        for o in 1..n_options {
            if q_so[low_index(n_states, s, o)] > q_so[low_index(n_states, s, best)] {
                best = o;
            }
        }
        best
    });
    MasterPolicy::new(table)
}

/// Optimal option values `q*(s, o)` for fixed options, by policy iteration
/// over deterministic master policies. Returned at `o * |S| + s`.
pub fn optimal_option_values<T: Real>(model: &OptionModel<T>) -> Result<Vec<T>> {
    let (ns, no) = (model.n_states(), model.n_options());
    let mut current = OptionModel::new(model.mdp.clone(), model.options.clone(), greedy_master(ns, no, &vec![T::zero(); ns * no]))?;
    // each improvement strictly increases values, so this bound is never hit
    // on well-posed instances; it only guards against round-off cycling
    let max_iters = 10 * ns * no + 100;
    for _ in 0..max_iters {
        let q = exact_policy_evaluation(&current)?.q_so;
        let next = greedy_master(ns, no, &q);
        let improves = (0..ns).any(|s| {
            let old = (0..no).find(|&o| current.master.prob(s, o) == T::one()).unwrap_or(0);
            let new = (0..no).find(|&o| next.prob(s, o) == T::one()).unwrap_or(0);
            let eps = T::lit(1e-12) * (T::one() + q[low_index(ns, s, old)].abs());
            new != old && q[low_index(ns, s, new)] > q[low_index(ns, s, old)] + eps
        });
        if !improves {
            return Ok(q);
        }
        current.master = next;
    }
    Err(Error::NonFinite("policy iteration did not settle".into()))
}

/// Max-norm residual of the optimality equation
/// `q(s,o) = r(s,o) + gamma sum p(s'|s,o) [(1-beta) q(s',o) + beta max q(s',.)]`.
pub fn optimality_residual<T: Real>(model: &OptionModel<T>, q_so: &[T]) -> Result<T> {
    let (ns, no) = (model.n_states(), model.n_options());
    let gamma = model.mdp.gamma();
    let best: Vec<T> = (0..ns)
        .map(|s| (0..no).map(|o| q_so[low_index(ns, s, o)]).fold(T::neg_infinity(), T::max))
        .collect();
    let mut worst = T::zero();
    for o in 0..no {
        for s in 0..ns {
            let (row, r) = model.state_option_kernel(s, o)?;
            let next: T = row
                .iter()
                .enumerate()
                .map(|(s2, &p)| {
                    let beta = model.options.beta(OptionSlot::Real(o), s2);
                    p * ((T::one() - beta) * q_so[low_index(ns, s2, o)] + beta * best[s2])
                })
                .sum();
            worst = worst.max((r + gamma * next - q_so[low_index(ns, s, o)]).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{OptionDef, OptionSet, TabularMdp};
    use crate::oracle::instances::{random_model, InstanceSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_step_model(c: f64, n_options: usize) -> OptionModel<f64> {
        // state 0 always moves to the absorbing state 1 paying c
        let mdp = TabularMdp::new(
            2,
            2,
            vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
            vec![c, c, 0.0, 0.0],
            vec![1.0, 0.0],
            0.9,
            vec![false, true],
        )
        .unwrap();
        let options = (0..n_options)
            .map(|o| OptionDef::new(PolicyTable::deterministic(2, 2, |_| o % 2), vec![0.5; 2]).unwrap())
            .collect();
        OptionModel::new(mdp, OptionSet::new(options).unwrap(), MasterPolicy::uniform(2, n_options)).unwrap()
    }

    #[test]
    fn one_step_episode_values_equal_the_reward() {
        let exact = exact_policy_evaluation(&one_step_model(2.5, 3)).unwrap();
        for o in 0..3 {
            assert!((exact.q(0, o) - 2.5).abs() < 1e-12);
            assert!(exact.q(1, o).abs() < 1e-12);
        }
    }

    #[test]
    fn full_termination_makes_arrival_value_the_state_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_model::<f64, _>(&mut rng, &InstanceSpec::default()).unwrap();
        let options = m
            .options
            .iter()
            .map(|o| OptionDef::new(o.pi().clone(), vec![1.0; m.n_states()]).unwrap())
            .collect();
        let m = OptionModel::new(m.mdp.clone(), OptionSet::new(options).unwrap(), m.master.clone()).unwrap();
        let exact = exact_policy_evaluation(&m).unwrap();
        for o in 0..m.n_options() {
            for s in 0..m.n_states() {
                assert!((exact.u(o, s) - exact.v[s]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn value_identities_hold_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let m = random_model::<f64, _>(&mut rng, &InstanceSpec::default()).unwrap();
            let exact = exact_policy_evaluation(&m).unwrap();
            assert!(exact.bellman_residual < 1e-10);
            assert!(exact.identity_residual(&m) < 1e-10);
        }
    }

    #[test]
    fn zero_discount_occupancy_is_the_start_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let m = random_model::<f64, _>(&mut rng, &InstanceSpec { min_states: 2, ..Default::default() }).unwrap();
        let m = OptionModel::new(m.mdp.with_gamma(0.0).unwrap(), m.options.clone(), m.master.clone()).unwrap();
        let occ = occupancy(&m, (1, 0)).unwrap();
        for (i, &x) in occ.rho.iter().enumerate() {
            let expect = if i == low_index(m.n_states(), 1, 0) { 1.0 } else { 0.0 };
            assert_eq!(x, expect);
        }
    }

    #[test]
    fn occupancy_matches_power_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..10 {
            let m = random_model::<f64, _>(&mut rng, &InstanceSpec::default()).unwrap();
            let (p, _) = state_option_chain(&m).unwrap();
            let n = m.n_states() * m.n_options();
            let occ = occupancy(&m, (0, 0)).unwrap();
            let gamma = m.mdp.gamma();
            let mut dist = vec![0.0; n];
            dist[0] = 1.0;
            let mut acc = vec![0.0; n];
            let mut disc = 1.0;
            for _ in 0..2000 {
                for i in 0..n {
                    acc[i] += disc * dist[i];
                }
                dist = (0..n).map(|j| (0..n).map(|i| dist[i] * p[i * n + j]).sum()).collect();
                disc *= gamma;
            }
            for i in 0..n {
                assert!((acc[i] - occ.rho[i]).abs() < 1e-10);
            }
            assert!((occ.total() - 1.0 / (1.0 - gamma)).abs() < 1e-9);
        }
    }

    #[test]
    fn critic_identity_holds_for_full_termination() {
        let m = one_step_model(1.0, 2);
        let report = critic_identity_residual(&m).unwrap();
        assert!(report.residual < 1e-12 && report.u_gap < 1e-12 && report.v_gap < 1e-12);
    }

    #[test]
    fn optimal_values_satisfy_the_optimality_equation() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..30 {
            let m = random_model::<f64, _>(&mut rng, &InstanceSpec::default()).unwrap();
            let q = optimal_option_values(&m).unwrap();
            assert!(optimality_residual(&m, &q).unwrap() < 1e-10);
        }
    }
}
