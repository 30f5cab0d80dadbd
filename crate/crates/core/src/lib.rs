//! Multi-cluster wireless energy transfer beamforming from a uniform linear
//! array: channel generation, statistical and full-CSIT precoders, an
//! EH-constrained fairness solver, Gamma-law baselines and a Monte Carlo
//! harness.

pub mod analytics;
pub mod channel;
pub mod cli;
pub mod config;
pub mod constrained;
pub mod error;
pub mod linalg;
pub mod precoding;
pub mod selfcheck;
pub mod serde_ext;
pub mod simulation;

pub use error::{Error, Result};
