//! Margin-propagation (MP) maximum-entropy analog correlator simulation.
//!
//! The crate is organized bottom-up: [`mp`] solves the scalar MP constraint,
//! [`maxent`] ties it to Tsallis maximum-entropy ensembles, [`correlator`]
//! builds differential correlators from input pairs, [`dynamics`] integrates
//! the transient circuit equations, [`calibration`] and [`metrics`] turn raw
//! outputs into correlation estimates and figures of merit, and
//! [`applications`] implements spectrum sensing, compressive recovery and
//! spread-spectrum demodulation on top. [`studies`] holds the Monte-Carlo
//! pipelines shared by the CLI and the acceptance suite.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod applications;
pub mod calibration;
pub mod correlator;
pub mod dynamics;
pub mod error;
pub mod maxent;
pub mod metrics;
pub mod mp;
pub mod nonlinearity;
pub mod rng;
pub mod studies;

pub use error::{Error, Result};
pub use mp::{mp_gradient, mp_solve, mp_solve_with, MpProblem, MpSolution, ReluMpSolver, SolverOptions};
pub use nonlinearity::Nonlinearity;
