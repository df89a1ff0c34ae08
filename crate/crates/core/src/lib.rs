//! Chance-constrained linear programs solved through sample average
//! approximation.
//!
//! The crate covers the whole pipeline: choosing a scenario budget `(N, k)`
//! with a confidence certificate, solving the scenario program with
//! constraint-discarding heuristics, exact baselines (big-M MIP and a
//! Gaussian cone reformulation), and out-of-sample validation.

pub mod certificate;
pub mod data;
pub mod error;
pub mod experiment;
pub mod gaussian;
pub mod heuristics;
pub mod lp;
pub mod mip;
pub mod saa;

pub use error::{Error, Result};
