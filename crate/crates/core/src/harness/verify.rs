//! Exact property suites over random small instances, reported as one
//! residual per check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augmented::{lift_high_options, lift_low};
use crate::error::Result;
use crate::funcapprox::{finite_difference_fourth_order, gradient_check_suite, relative_error, ActionSpace, ArchitectureSpec, OptionArchitecture};
use crate::learners::{iopg_posterior_step, PosteriorState};
use crate::oracle::{
    critic_identity_residual, enumerate_base, enumerate_base_options, enumerate_chain, exact_values_of,
    oc_gradients_exact, option_posterior_exact, random_model, return_on_chains, ChainTrajectory, Chains, History,
    InstanceSpec,
};

/// Worst residual of one check over all cases, with its pass threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteCheck {
    pub name: String,
    pub cases: usize,
    pub worst: f64,
    pub tolerance: f64,
}

impl SuiteCheck {
    fn new(name: &str, tolerance: f64) -> Self {
        Self { name: name.into(), cases: 0, worst: 0.0, tolerance }
    }

    fn record(&mut self, residual: f64) {
        self.cases += 1;
        // NaN must not hide behind max
        self.worst = if residual.is_nan() || self.worst.is_nan() { f64::NAN } else { self.worst.max(residual) };
    }

    pub fn passed(&self) -> bool {
        self.cases > 0 && self.worst < self.tolerance
    }
}

/// Enumerates every trajectory up to `horizon` on the base process and both
/// augmented chains for `instances` random models and compares trajectory
/// probabilities, total masses and expected returns.
pub fn chain_equivalence_suite(instances: usize, horizon: usize, seed: u64) -> Result<Vec<SuiteCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = InstanceSpec::default();
    let mut high = SuiteCheck::new("high_chain_probability_gap", 1e-12);
    let mut low = SuiteCheck::new("low_chain_probability_gap", 1e-12);
    let mut mass = SuiteCheck::new("chain_mass_error", 1e-10);
    let mut ret = SuiteCheck::new("return_gap_across_chains", 1e-12);
    for _ in 0..instances {
        let chains = Chains::new(random_model::<f64, _>(&mut rng, &spec)?)?;
        let base = enumerate_base(&chains.model, horizon);
        let mut worst_low: f64 = 0.0;
        for (traj, p) in &base {
            let q = chains.trajectory_probability(ChainTrajectory::Low(&lift_low(traj)))?;
            worst_low = worst_low.max((p - q).abs());
        }
        low.record(worst_low);
        let base_options = enumerate_base_options(&chains.model, horizon);
        let mut worst_high: f64 = 0.0;
        for (traj, p) in &base_options {
            let q = chains.trajectory_probability(ChainTrajectory::High(&lift_high_options(traj)))?;
            worst_high = worst_high.max((p - q).abs());
        }
        high.record(worst_high);
        let totals = [
            base.iter().map(|(_, p)| p).sum::<f64>(),
            base_options.iter().map(|(_, p)| p).sum::<f64>(),
            enumerate_chain(&chains.high, chains.high_policy.table(), horizon).iter().map(|e| e.prob).sum(),
            enumerate_chain(&chains.low, chains.low_policy.table(), horizon).iter().map(|e| e.prob).sum(),
        ];
        mass.record(totals.iter().map(|t| (t - 1.0).abs()).fold(0.0, f64::max));
        ret.record(return_on_chains(&chains, horizon).max_gap());
    }
    Ok(vec![high, low, mass, ret])
}

/// High-MDP values from an independent solve against the low critic pushed
/// through the high policy, and against the option values upon arrival.
pub fn critic_identity_suite(instances: usize, seed: u64) -> Result<Vec<SuiteCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = InstanceSpec::default();
    let mut identity = SuiteCheck::new("critic_identity_residual", 1e-9);
    let mut arrival = SuiteCheck::new("high_value_vs_arrival_value", 1e-9);
    for _ in 0..instances {
        let report = critic_identity_residual(&random_model::<f64, _>(&mut rng, &spec)?)?;
        identity.record(report.residual);
        arrival.record(report.u_gap);
    }
    Ok(vec![identity, arrival])
}

fn random_architecture(rng: &mut ChaCha8Rng) -> Result<(OptionArchitecture<f64>, crate::mdp::TabularMdp<f64>)> {
    let m = random_model::<f64, _>(rng, &InstanceSpec { min_states: 2, ..Default::default() })?;
    let mut arch = OptionArchitecture::new(
        &ArchitectureSpec::default(),
        m.n_states(),
        ActionSpace::Discrete(m.n_actions()),
        m.n_options(),
        rng,
    )?;
    arch.params.as_mut_slice().iter_mut().for_each(|p| *p = rng.random_range(-2.0..2.0));
    Ok((arch, m.mdp))
}

/// Exact intra-option and termination gradients of `v(s0)` against
/// fourth-order central differences of the exactly evaluated value, at
/// random softmax-tabular parameter points. Termination gradients are often
/// tiny, so second-order differences at a small step drown in round-off.
pub fn oc_gradient_suite(points: usize, seed: u64) -> Result<SuiteCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut check = SuiteCheck::new("oc_gradient_relative_error", 1e-4);
    for _ in 0..points {
        let (arch, mdp) = random_architecture(&mut rng)?;
        let s0 = 0;
        let exact = oc_gradients_exact(&arch, &mdp, s0)?;
        let flat = arch.params.as_slice().to_vec();
        let value = |x: &[f64]| {
            let mut a = arch.clone();
            a.params.as_mut_slice().copy_from_slice(x);
            exact_values_of(&a, &mdp).map_or(f64::NAN, |e| e.v[s0])
        };
        let fd = finite_difference_fourth_order(value, &flat, 1e-3);
        let nu = relative_error(&exact.grad_nu, &fd[arch.params.nu_range()], 1e-6);
        let phi = relative_error(&exact.grad_phi, &fd[arch.params.phi_range()], 1e-6);
        check.record(nu.max(phi));
    }
    Ok(check)
}

/// The recursive option posterior against brute-force enumeration over
/// option sequences, on every prefix of sampled histories.
pub fn posterior_suite(histories: usize, max_len: usize, seed: u64) -> Result<SuiteCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = InstanceSpec { terminal_prob: 0.0, ..Default::default() };
    let mut check = SuiteCheck::new("option_posterior_gap", 1e-10);
    for _ in 0..histories {
        let m = random_model::<f64, _>(&mut rng, &spec)?;
        let traj = m.sample_episode(&mut rng, max_len.max(1))?;
        let mut post = PosteriorState::initial(&m, traj.states[0])?;
        let mut worst: f64 = 0.0;
        for t in 0..=traj.actions.len() {
            let h = History::new(traj.states[..=t].to_vec(), traj.actions[..t].to_vec())?;
            let exact = option_posterior_exact(&m, &h)?;
            worst = exact.iter().zip(&post.m).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
            if t < traj.actions.len() {
                post = iopg_posterior_step(&post, &m, traj.states[t], traj.actions[t], traj.states[t + 1])?;
            }
        }
        check.record(worst);
    }
    Ok(check)
}

/// Finite-difference checks of every head of every parameterization kind
/// in double precision.
pub fn gradient_machinery_suite(points: usize, seed: u64) -> Result<Vec<SuiteCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(gradient_check_suite::<f64, _>(&mut rng, points)?
        .into_iter()
        .map(|g| SuiteCheck { name: format!("fd/{}", g.name), cases: points, worst: g.rel_error, tolerance: 1e-5 })
        .collect())
}

/// Instance counts for [`verify_all`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyScale {
    pub chain_instances: usize,
    pub horizon: usize,
    pub identity_instances: usize,
    pub gradient_points: usize,
    pub histories: usize,
    pub fd_points: usize,
}

impl VerifyScale {
    pub const FULL: Self = Self {
        chain_instances: 200,
        horizon: 5,
        identity_instances: 100,
        gradient_points: 50,
        histories: 100,
        fd_points: 20,
    };
    pub const QUICK: Self =
        Self { chain_instances: 20, horizon: 3, identity_instances: 20, gradient_points: 5, histories: 20, fd_points: 3 };
}

pub fn verify_all(scale: VerifyScale, seed: u64) -> Result<Vec<SuiteCheck>> {
    let mut out = chain_equivalence_suite(scale.chain_instances, scale.horizon, seed)?;
    out.extend(critic_identity_suite(scale.identity_instances, seed)?);
    out.push(oc_gradient_suite(scale.gradient_points, seed)?);
    out.push(posterior_suite(scale.histories, 4, seed)?);
    out.extend(gradient_machinery_suite(scale.fd_points, seed)?);
    Ok(out)
}

pub fn format_table(checks: &[SuiteCheck]) -> String {
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(4).max(5);
    let mut s = format!("{:<width$}  {:>6}  {:>12}  {:>9}  result\n", "check", "cases", "worst", "tolerance");
    for c in checks {
        s += &format!(
            "{:<width$}  {:>6}  {:>12.3e}  {:>9.0e}  {}\n",
            c.name,
            c.cases,
            c.worst,
            c.tolerance,
            if c.passed() { "ok" } else { "FAIL" }
        );
    }
    s
}
