//! Source-level loop transformation autotuner.
//!
//! The tuner explores a tree-shaped space of loop transformation
//! configurations. The root is the untransformed program; every child adds
//! exactly one transformation (tiling, interchange or thread
//! parallelization) to its parent's list. Candidates are realized by
//! inserting `#pragma clang loop` directives into the C source, compiled and
//! timed, and the best-first driver always expands the fastest configuration
//! seen so far.
//!
//! Module map:
//!
//! - [`loopmodel`]: loop nest structure, JSON ingestion, perfect sub-nest
//!   enumeration
//! - [`transforms`]: the three transformations, structural application,
//!   child derivation
//! - [`rewrite`]: pragma rendering and source rewriting
//! - [`evaluate`]: compile-and-measure harness plus a synthetic cost model
//!   for reproducible experiments
//! - [`search`]: best-first driver, experiment tree, resumable JSONL log
//! - [`report`]: DOT and CSV exports of a finished (or interrupted) run
//! - [`cli`]: the `mctree` command line on top of all of the above
//!
//! The runnable examples under `examples/` walk through each capability;
//! `cargo run -p mctree --example synthetic_autotune` is a good starting
//! point.

pub mod cli;
pub mod error;
pub mod evaluate;
pub mod loopmodel;
pub mod report;
pub mod rewrite;
pub mod search;
pub mod transforms;

mod hash;

pub use error::{Error, Result};
pub use loopmodel::{parse_loopnests, Loop, LoopNest, LoopOrigin, PerfectSubNest, SourceLocation};
pub use transforms::{apply, count_children, derive_children, Configuration, Transformation};
