//! Solver laboratory for inversion and editing on rectified flows, built
//! around exact closed-form velocity fields for Gaussian-mixture data.
//!
//! The crate provides inversion via direct noise alignment with exact
//! reconstruction, velocity-guided editing against a mobile reference,
//! reference baselines, scenario metrics, and a reproducible experiment
//! harness. Everything is deterministic given a seed.

pub mod error;
pub mod math;
pub mod flow;
pub mod velocity;
pub mod dna;
pub mod mvg;
pub mod baselines;
pub mod metrics;
pub mod harness;

pub use error::{Error, Result};
pub use math::{RngStream, SpdMatrix, Vector};
