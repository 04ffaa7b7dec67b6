//! Out-of-core size-constrained graph clustering and multilevel graph
//! partitioning.
//!
//! The crate is organised bottom-up:
//!
//! * [`em`] – external arrays, merge sort, priority queue, budget and I/O ledger.
//! * [`graph`] – the on-disk adjacency-array graph, builders and quality metrics.
//! * [`lp`] – size-constrained label propagation (semi-external, parallel,
//!   time-forward external, active nodes).
//! * [`coloring`] – coloring-based bucket clustering with external size constraints.
//! * [`multilevel`] – contraction, solution transfer, refinement and the full pipeline.

pub mod coloring;
pub mod em;
pub mod error;
pub mod graph;
pub mod lp;
pub mod multilevel;

pub use error::{Error, Result};
