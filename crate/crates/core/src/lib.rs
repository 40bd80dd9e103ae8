//! Options as two augmented MDPs.
//!
//! A base MDP with options and a master policy induces a high MDP (choose an
//! option given the previous option and the state) and a low MDP (choose an
//! action given the state and the held option). This crate builds both,
//! verifies the equivalences exactly on small instances, and trains options
//! with a double actor-critic over interchangeable policy optimisers, next to
//! the usual baselines.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the precision to `f64`, which is the default everywhere.

pub mod augmented;
pub mod error;
pub mod funcapprox;
pub mod harness;
pub mod learners;
pub mod linalg;
pub mod mdp;
pub mod oracle;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type TabularMdp64 = mdp::TabularMdp<f64>;
pub type OptionModel64 = mdp::OptionModel<f64>;
pub type OptionSet64 = mdp::OptionSet<f64>;
pub type Trajectory64 = mdp::Trajectory<f64>;
pub type HighMdp64 = augmented::HighMdp<f64>;
pub type LowMdp64 = augmented::LowMdp<f64>;
