//! Autotune against the synthetic cost model.
//!
//! The synthetic evaluator scores a configuration instead of compiling and
//! running it, which makes search behavior reproducible and fast enough to
//! study. The model here rewards parallelizing an outer loop (24x at depth
//! 0, 6x at depth 1, 2x deeper), gives tilings near the preferred sizes
//! (256,16) a bonus, and rejects any pragma matching an illegal pattern the
//! way a dependence check would.
//!
//! Run with: cargo run -p mctree --example synthetic_autotune

use mctree::evaluate::{CostModel, SyntheticEvaluator, TileAffinity};
use mctree::loopmodel::{Loop, LoopNest};
use mctree::search::{self, SearchParams};

fn main() -> mctree::Result<()> {
    let nest = LoopNest {
        function: "gemm".into(),
        roots: vec![Loop::source("i", "gemm.c", 2, 3).with_children(vec![
            Loop::source("j", "gemm.c", 3, 5)
                .with_children(vec![Loop::source("k", "gemm.c", 4, 7)]),
        ])],
    };

    let mut model = CostModel::new(8.0, std::slice::from_ref(&nest));
    model.parallel_speedup = vec![24.0, 6.0, 2.0];
    model.tile_affinity = Some(TileAffinity {
        preferred: vec![256, 16],
        best_factor: 0.6,
        distance_weight: 0.04,
    });
    model.illegal_pragma_patterns = vec!["permutation(k,".into()];
    let mut evaluator = SyntheticEvaluator::new(model);

    let mut params = SearchParams::new(&[16, 64, 256], true);
    params.max_experiments = Some(120);

    let result = search::run(&mut evaluator, &params, None, |e, is_new_best| {
        if is_new_best || !e.outcome.is_ok() {
            let what = e
                .added()
                .map(|(_, t)| t.to_string())
                .unwrap_or_else(|| "baseline".into());
            match e.outcome.seconds() {
                Some(s) => println!("[{:>3}] {s:.4}s  {what}  << best", e.number),
                None => println!("[{:>3}] {}  {what}", e.number, e.outcome.status_str()),
            }
        }
    })?;

    let best = result.best_experiment().unwrap();
    println!("\nstopped: {:?}", result.stopped);
    println!(
        "{} experiments, best is {} at {:.4}s:",
        result.experiments.len(),
        best.number,
        best.outcome.seconds().unwrap()
    );
    for line in best.pragma_lines().concat() {
        println!("  {line}");
    }

    // The tree structure is explicit: every experiment knows its parent.
    let mut chain = vec![best];
    while let Some(p) = chain.last().unwrap().parent {
        chain.push(&result.experiments[p as usize]);
    }
    chain.reverse();
    println!(
        "path from the baseline: {}",
        chain
            .iter()
            .map(|e| e.number.to_string())
            .collect::<Vec<_>>()
            .join(" -> ")
    );
    Ok(())
}
