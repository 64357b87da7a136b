//! Composite-objective solvers built around accelerated proximal gradient
//! methods (ISTA, FISTA, APG) and accelerated proximal coordinate descent,
//! together with the restart schedules that make them linearly convergent on
//! strongly convex problems.
//!
//! The crate is organized as follows:
//!
//! - [`schedule`]: the scalar momentum recursions (θ-sequence, ξ aggregates)
//!   and the closed-form restart-period / mixing-weight choices with their
//!   rate estimates.
//! - [`problems`]: composite objectives `F = f + ψ` with gradient and
//!   per-coordinate oracles, separable proximal maps and the step-size
//!   weight vectors they require.
//! - [`solvers`]: the iteration engines and the [`solvers::run`] driver that
//!   produces convergence traces.
//! - [`restart`]: restart policies, trigger logic and restart points.
//! - [`approx_efficient`]: the aggregate-based coordinate-descent engine whose
//!   per-iteration cost is proportional to the sampled coordinates only.
//! - [`oracle`]: slow, obviously-correct reference implementations used by
//!   the test suites.
//! - [`data_io`]: dataset ingestion, synthetic instances, trace and reference
//!   persistence.
//! - [`cli`]: the command-line front end (`solve`, `rates`, `sweep`,
//!   `make-reference`).

pub mod approx_efficient;
pub mod cli;
pub mod data_io;
pub mod oracle;
pub mod problems;
pub mod restart;
pub mod schedule;
pub mod solvers;

pub use problems::{CompositeProblem, SparseDesign};
pub use restart::RestartPolicy;
pub use solvers::{run, RunTrace, SolverKind, StopRule};
