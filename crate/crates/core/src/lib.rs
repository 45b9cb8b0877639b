//! Reconciliation k-median.
//!
//! Select `k` representatives from a facility set so that clients are served
//! cheaply while the chosen representatives stay close to one another:
//!
//! ```text
//! cost(S) = sum_c d(c, S) + (lambda / 2) * sum_{s in S} sum_{t in S} d(s, t)
//! ```
//!
//! The crate provides the instance model and loaders ([`instance`]), distance
//! builders ([`metrics`]), dense linear algebra ([`linalg`]), the objective with
//! incremental swap evaluation ([`objective`]), swap-based local search with
//! restarts ([`solver`]), spectral bounds and an exhaustive oracle ([`bounds`]),
//! and the experiment sweep machinery ([`harness`]).
//!
//! With the default `parallel` feature restarts, sweep cells, oracle
//! enumeration and BFS rows run on rayon; without it every [`Execution`] mode
//! runs sequentially. Output is identical either way.

pub mod bounds;
pub mod error;
pub mod harness;
pub mod instance;
pub mod linalg;
pub mod metrics;
pub mod objective;
pub mod par;
pub mod solver;

pub use bounds::{brute_force, mpd_oracle, spectral_bounds, BoundsReport, OracleResult};
pub use error::{Error, Result};
pub use instance::{load_instance, validate_metric, Instance, InstanceSource, MetricReport};
pub use objective::{
    assign_clients, cost, raw_pair_sum, swap_delta, Assignment, AssignmentMode, CostBreakdown,
    Normalization,
};
pub use par::Execution;
pub use solver::{
    find_improving_swap, local_search, solve, RunStats, Solution, SolverConfig, Strategy,
};

/// Absolute tolerance used for distance comparisons throughout the crate.
pub const DIST_TOL: f64 = 1e-9;
