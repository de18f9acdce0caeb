//! Rayleigh-Benard convection between periodic rough walls with Navier-slip
//! boundary conditions: simulator, diagnostics and bound evaluation.

// `!(x > 0.0)` rejects NaN alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod checkpoint;
pub mod config;
pub mod diagnostics;
pub mod elliptic;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod run;
pub mod scaling;
pub mod solver;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
