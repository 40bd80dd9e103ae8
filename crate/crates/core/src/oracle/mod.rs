//! Exact computations on small option models: trajectory enumeration,
//! linear-solve policy evaluation, occupancy measures, the critic identity
//! between the two augmented MDPs, option posteriors and exact Option-Critic
//! gradients.

mod enumerate;
mod evaluation;
mod gradients;
mod instances;
mod posterior;
mod report;

pub use enumerate::{
    enumerate_base, enumerate_base_options, enumerate_chain, expected_return, return_on_chains, ChainTrajectory,
    Chains, EnumeratedPath, ReturnOnChains,
};
pub use evaluation::{
    arrival_chain, arrival_occupancy_from, critic_identity_residual, exact_policy_evaluation, greedy_master,
    occupancy, occupancy_from, optimal_option_values, optimality_residual, policy_values, state_option_chain,
    CriticIdentityReport, ExactValues, OccupancyTable,
};
pub use gradients::{
    exact_values_of, intra_option_gradient_at, oc_gradients_exact, termination_gradient_at, OcGradients,
};
pub use instances::{random_distribution, random_model, InstanceSpec};
pub use posterior::{option_posterior_exact, History};
pub use report::{write_residual_csv, ResidualRow};
