//! Interrupt a search and pick it up again from its log.
//!
//! Every experiment is appended to the JSONL log the moment its
//! measurement finishes, so a crash or a ctrl-C loses nothing. A resume
//! does not re-run anything: child derivation is deterministic, so the
//! logged outcomes are replayed into the exact in-memory state the
//! interrupted search had, including a half-finished expansion, and the
//! search continues from there. The resumed log is byte for byte the log
//! an uninterrupted run would have written.
//!
//! Run with: cargo run -p mctree --example resume_log

use std::fs;

use mctree::evaluate::{CostModel, SyntheticEvaluator};
use mctree::loopmodel::{Loop, LoopNest};
use mctree::search::{self, read_log, SearchParams};

fn evaluator() -> SyntheticEvaluator {
    let nest = LoopNest {
        function: "stencil".into(),
        roots: vec![Loop::source("t", "stencil.c", 3, 3).with_children(vec![
            Loop::source("x", "stencil.c", 4, 5)
                .with_children(vec![Loop::source("y", "stencil.c", 5, 7)]),
        ])],
    };
    let mut model = CostModel::new(4.0, &[nest]);
    model.parallel_speedup = vec![8.0, 3.0];
    SyntheticEvaluator::new(model)
}

fn main() -> mctree::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let log = dir.path().join("search.jsonl");
    let quiet = |_: &search::Experiment, _: bool| {};

    // First session: stop after 20 experiments, mid expansion.
    let mut params = SearchParams::new(&[8, 32], true);
    params.max_experiments = Some(20);
    let first = search::run(&mut evaluator(), &params, Some(&log), quiet)?;
    println!(
        "first session: {} experiments, stopped {:?}",
        first.experiments.len(),
        first.stopped
    );

    let contents = read_log(&log)?;
    println!(
        "log header: evaluator {}, tile sizes {:?}",
        contents.header.evaluator, contents.header.tile_sizes
    );

    // Second session: same parameters, bigger budget. Replays the 20
    // logged outcomes without calling the evaluator, then keeps going.
    params.max_experiments = Some(60);
    let mut fresh_calls = 0;
    let resumed = search::resume(&mut evaluator(), &params, &log, |_, _| fresh_calls += 1)?;
    println!(
        "resume: {} experiments total, {} evaluated now",
        resumed.experiments.len(),
        fresh_calls
    );

    // An uninterrupted 60-experiment run writes the identical log.
    let clean_log = dir.path().join("clean.jsonl");
    search::run(&mut evaluator(), &params, Some(&clean_log), quiet)?;
    assert_eq!(fs::read(&log).unwrap(), fs::read(&clean_log).unwrap());
    println!("resumed log matches the uninterrupted one byte for byte");

    // A parameter change would silently search a different space, so it
    // is refused instead.
    let mut other = params.clone();
    other.tile_sizes = vec![7];
    let err = search::resume(&mut evaluator(), &other, &log, quiet).unwrap_err();
    println!("changed tile sizes: {err}");
    Ok(())
}
