//! Exact and heuristic least trimmed squares regression.
//!
//! The mixed-integer formulations (big-M, conic, strengthened conic) are
//! solved by an in-house branch-and-bound over the discard indicators; the
//! classical heuristics serve as baselines.

// NaN-rejecting `!(x > 0.0)` checks and index loops over parallel arrays are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod data;
pub mod error;
pub mod heuristics;
pub mod hulls;
pub mod linalg;
pub mod metrics;
pub mod problem;
pub mod relax;
pub mod solver;
pub mod standardize;
pub mod synthetic;

pub use data::{Dataset, GroundTruth};
pub use error::{Error, Result};
pub use problem::{Design, InterceptMode, Method, ProblemSpec, Solution, Tolerances};
pub use solver::{enumerate_oracle, solve, solve_mio, BnbParams, SolveReport, Status};
pub use standardize::{standardize, StandardizedInstance};
