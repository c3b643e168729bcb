//! Constrained bidirectional RRT-Connect.
//!
//! Tree extensions interpolate a fixed-width motion segment, project the whole
//! segment onto a task-constraint manifold with a team of logical workers (one
//! per waypoint), and validate it with per-waypoint collision checks that share
//! an early-termination flag.
//!
//! The crate is `no_std` and only needs `alloc`. Everything here is
//! deterministic: the worker team is simulated in a fixed order by
//! [`team::SequentialTeam`]. Real threads, file formats and the benchmark
//! harness live in the `rrtc-bench` companion crate, which plugs into the
//! planner through the [`team::WorkerTeam`] trait.

// `!(x < tol)` deliberately treats NaN as a failure
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![no_std]
extern crate alloc;

pub mod constraints;
mod error;
pub mod geometry;
pub mod kinematics;
mod math;
pub mod planner;
pub mod projection;
pub mod sampling;
pub mod team;
#[cfg(test)]
mod test_oracles;
pub mod validation;

pub use error::{Error, Result};
pub use kinematics::Configuration;
