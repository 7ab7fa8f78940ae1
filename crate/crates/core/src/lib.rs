//! Core engine for turning generated programming tasks, candidate solutions
//! and test inputs into verified `(task, golden solution, weighted suite)`
//! triples and RL reward signals.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`sandbox`]: code extraction, parse checks, limited process execution
//!   and the failure taxonomy.
//! - [`testgen`]: seeded, byte-reproducible test input corpora.
//! - [`consensus`]: majority voting over candidate outputs and test weighting.
//! - [`verifier`]: solution filters, suite splitting, weighted selection,
//!   hold-out confirmation and solvability filtering.
//! - [`reward`]: the scalar reward used by RL training loops.
//! - [`pipeline`]: provider-driven orchestration of the whole flow.

#![forbid(unsafe_op_in_unsafe_fn)]

pub mod consensus;
pub mod output;
pub mod pipeline;
pub mod reward;
pub mod sandbox;
pub mod task;
pub mod testgen;
pub mod verifier;

pub use output::{normalize_output, OutputMatch};
pub use task::{CandidateSolution, EntrySignature, Style, TaskSpec};
