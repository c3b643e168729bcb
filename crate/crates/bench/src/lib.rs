//! Benchmark harness for `rrtc-core`: TOML scene, robot, problem and suite
//! files, a thread-backed worker team, path re-validation, and the suite
//! runner behind the `bench` binary.

// `!(x < tol)` deliberately treats NaN as a failure
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod formats;
pub mod suite;
pub mod threaded;
pub mod verify;

pub use formats::{load_problem, load_robot, load_scene, load_suite, BenchSuite, NamedProblem};
pub use suite::{emit_cdf, run_suite, summarize, RunOptions, TrialRecord};
pub use threaded::ThreadedTeam;
