//! Render a finished run as a Graphviz tree and a progress table.
//!
//! Run with: cargo run -p mctree --example export_dot
//!
//! Pipe the first block through `dot -Tsvg` to see the tree: the baseline
//! is blue, measured experiments green, rejected ones red.

use mctree::evaluate::{CostModel, SyntheticEvaluator};
use mctree::loopmodel::{Loop, LoopNest};
use mctree::report::{export_dot, export_progress_csv};
use mctree::search::{self, SearchParams};

fn main() -> mctree::Result<()> {
    let nest = LoopNest {
        function: "kernel".into(),
        roots: vec![Loop::source("i", "k.c", 2, 3)
            .with_children(vec![Loop::source("j", "k.c", 3, 5)])],
    };
    let mut model = CostModel::new(2.0, &[nest]);
    model.parallel_speedup = vec![5.0, 1.5];
    model.illegal_pragma_patterns = vec!["permutation(j,i)".into()];
    let mut evaluator = SyntheticEvaluator::new(model);

    let mut params = SearchParams::new(&[16], true);
    params.max_experiments = Some(12);
    let result = search::run(&mut evaluator, &params, None, |_, _| {})?;

    let records = result.records();
    println!("{}", export_dot(&records));
    println!("{}", export_progress_csv(&records));
    Ok(())
}
