//! Convex capital requirements, demand and partial-equilibrium pricing of
//! contingent claims in finite-state, one-period incomplete markets.

pub mod cli;
pub mod equilibrium;
pub mod error;
pub mod io;
mod linalg;
pub mod lp;
pub mod market;
pub mod optim;
#[cfg(feature = "oracle")]
pub mod oracle;
pub mod risk;
pub mod stability;

pub use cli::run_cli;
pub use error::{Assumption, Error, Result};
