//! Differentiable parameterizations of the master policy, intra-option
//! policies, terminations and critics, with hand-written gradients, Adam and
//! observation normalisation.
//!
//! Feedforward heads read a tabular state `s` as the one-hot vector `e_s`
//! of length `|S|`.

mod architecture;
mod gradcheck;
mod head;
mod network;
mod optim;
mod params;

pub use architecture::{ActionSpace, ArchitectureSpec, OptionArchitecture, ParamKind};
pub use gradcheck::{finite_difference, finite_difference_fourth_order, gradient_check_suite, relative_error, GradCheck};
pub use head::{Head, Outcome, Output};
pub use network::{Activation, Forward, Network, Obs};
pub use optim::{Adam, AdamConfig, RunningNorm};
pub use params::{Checkpoint, ParamVector};
