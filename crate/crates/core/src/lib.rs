pub mod asymptotics;
pub mod copulas;
pub mod counterexample;
pub mod error;
pub mod marginals;
mod quad;
pub mod renewal;
pub mod rng;
pub mod simulator;

pub use error::{Error, Result};
