//! Simulated peg-in-hole positioning.
//!
//! Holes on a batch of boards are perturbed from their nominal positions.
//! Search strategies propose insertion points until the peg lands inside the
//! feasible disk of a hole. Three fixed baselines (linear, spiral, hybrid) are
//! compared with a meta search that learns a Gaussian belief per hole.

// `!(x > 0.0)` deliberately rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod env;
pub mod error;
pub mod gaussian;
pub mod harness;
pub mod linalg;
pub mod meta;
pub mod rng;
pub mod strategies;

pub use error::{Error, Result};
pub use linalg::{SymMat2, Vec2};
