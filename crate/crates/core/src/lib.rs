pub mod charges;
pub mod config;
pub mod error;
pub mod experiments;
pub mod hamiltonian;
pub mod montecarlo;
pub mod oracles;
pub mod rng;
pub mod runner;
pub mod stats;
pub mod walk;

pub use error::{Error, Result};
