//! Beam and channel selection for a multi-band mmWave base station serving a
//! mobile user, modelled as a POMDP and solved with point-based value
//! iteration.

pub mod artifact;
pub mod channel;
pub mod config;
pub mod error;
pub mod geometry;
pub mod mobility;
pub mod pbvi;
pub mod pomdp;
pub mod quadrature;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod units;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use pbvi::{solve, Policy, SolverConfig};
pub use pomdp::{Action, Belief, PomdpModel};
