//! Stochastic user equilibria in multi-modal transportation networks,
//! link-incentive optimization via two time-scale stochastic approximation,
//! and cooperative profit sharing with the asymmetric Nash bargaining
//! solution.
//!
//! The model: passengers choose among routes (hyperpaths) by a logit model
//! over congestion-dependent utilities, with elastic total demand per
//! passenger class. A platform sets a per-link incentive vector J (discounts
//! or surcharges) to maximize total profit subject to passenger-friendly
//! constraints, and the resulting profit is split among service providers so
//! that everyone gains from cooperation.
//!
//! Start with [`generators::chengdu_fixture`] and the `examples/` directory;
//! the `modalflow` binary exposes the same pipelines on scenario files.

pub mod assignment;
pub mod bargaining;
pub mod cli;
pub mod equilibrium;
pub mod error;
pub mod generators;
pub mod incentive;
pub mod network;
pub mod report;
pub mod scenario;
#[cfg(test)]
pub(crate) mod testdata;

pub use error::{Error, Result};
pub use scenario::Scenario;
