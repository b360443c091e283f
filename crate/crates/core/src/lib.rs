//! Constrained gradient flows and genus-based minimax levels for the
//! symmetric two-component Gross-Pitaevskii system in the strongly
//! repulsive regime, together with the segregated scalar limit.

pub mod checks;
pub mod commands;
pub mod config;
pub mod error;
pub mod flows;
pub mod functionals;
pub mod grid;
pub mod minimax;
pub mod sampling;
pub mod sweep;

pub use error::{Error, Result};
