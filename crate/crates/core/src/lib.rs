// SPDX-License-Identifier: MIT OR Apache-2.0

//! Residual-stream readout and steering laboratory.
//!
//! The crate is organised around the experiment pipeline:
//!
//! - [`corpus`]: paired prompt records, split bookkeeping, and a planted-signal
//!   generator used as a testing oracle.
//! - [`backend`]: a deterministic toy decoder-only transformer with residual
//!   capture and an additive steering hook, plus the `ACTV` activation format.
//! - [`direction`]: mean-difference directions, projections, and readout.
//! - [`steering`]: dose-response sweeps and matched deltas against the in-run
//!   scale-0 baseline.
//! - [`behavior`]: the two-integer answer contract and compliance audits.
//! - [`stats`]: OLS with HC3 covariance, correlations, and bootstrap intervals.
//! - [`classify`]: log-probability label scoring with prior calibration.
//! - [`plan`] and [`plots`]: declarative end-to-end runs and SVG reports.
//!
//! Data-parallel stages take an [`Exec`] mode. With the default `parallel`
//! feature they fan out over rayon; without it every stage runs sequentially
//! and produces the same bytes.

#[macro_use]
mod macros;

pub mod backend;
pub mod behavior;
pub mod classify;
pub mod corpus;
pub mod direction;
pub mod error;
pub mod exec;
pub mod plan;
pub mod plots;
pub mod scale;
pub mod stats;
pub mod steering;
pub mod tables;

pub use error::{LabError, Result};
pub use exec::Exec;
pub use scale::Scale;

/// Crate version embedded in emitted artifacts.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
