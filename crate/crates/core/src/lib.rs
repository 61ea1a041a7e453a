//! Flow-rate (λ) and probe market-penetration (p) estimation from probe
//! vehicle observations under Poisson arrivals.
//!
//! The crate is organised around the three information cases:
//!
//! * `p` known, `λ` unknown and `λ` known, `p` unknown: count-based
//!   estimators with closed-form variance, coverage and sample-size
//!   analysis ([`estimators`], [`reliability`]).
//! * both unknown: queue-position estimators evaluated on a Monte Carlo
//!   model of a signalized approach ([`estimators`], [`sim`]).
//!
//! [`ingest`] turns probe-event logs into windowed observations and
//! [`cli`] exposes everything as the `probeflow` binary.

pub mod cli;
pub mod error;
pub mod estimators;
pub mod ingest;
pub mod moments;
pub mod reliability;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use stats::{ArrivalRate, ObservationWindow, ProbeFraction};
