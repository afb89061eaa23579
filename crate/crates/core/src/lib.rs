//! Multi-agent path finding with PIBT and LaCAM, including PIBT-based
//! collision shielding for one-step action-distribution policies and the
//! orderings that mix such a policy with a cost-to-go heuristic.
//!
//! Module map:
//! - [`grid`]: grid world, actions, collision checks, costs.
//! - [`bench_io`]: MovingAI files, solution text, run-record CSV.
//! - [`heuristics`]: backward Dijkstra, Manhattan, K% degraded tables.
//! - [`policy`]: distributions, orderings, rankers, policy providers.
//! - [`pibt`]: one-step PIBT, CS-Naive and CS-PIBT.
//! - [`lacam`]: LaCAM search over configurations.
//! - [`runner`]: execution loops, sweeps and diagnostics.

pub mod bench_io;
pub mod grid;
pub mod heuristics;
pub mod lacam;
pub mod pibt;
pub mod policy;
pub mod runner;
pub mod seeds;

pub use grid::{Action, Cell, Configuration, GridMap, Instance, PathSet};
