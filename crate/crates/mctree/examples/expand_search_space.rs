//! Derive the children of a configuration.
//!
//! Every node of the search tree is a transformation list; its children
//! append exactly one more transformation. For a nest of depth d and t tile
//! sizes that is: one tiling per (perfect sub-nest, size vector) pair, every
//! non-identity permutation of each maximal sub-nest, and one thread
//! parallelization per loop. The space is infinite because tiling creates
//! loops that can be tiled again.
//!
//! Run with: cargo run -p mctree --example expand_search_space

use mctree::loopmodel::{parse_loopnests, LoopNest};
use mctree::rewrite::render_pragma;
use mctree::search::baseline_configs;
use mctree::{count_children, derive_children, Configuration};

const REPORT: &str = r#"{"loopnests": [{"function": "gemm", "loops": [
  {"id": "i", "location": {"file": "gemm.c", "line": 4, "column": 3}, "subloops": [
    {"id": "j", "location": {"file": "gemm.c", "line": 5, "column": 5}, "subloops": [
      {"id": "k", "location": {"file": "gemm.c", "line": 6, "column": 7}}]}]}]}]}"#;

fn show_batch(label: &str, base: &Configuration, tile_sizes: &[u64], parallel: bool) {
    let children = derive_children(base, tile_sizes, parallel);
    println!("{label}: {} children", children.len());
    for child in children.iter().take(4) {
        println!("  {}", render_pragma(child.added().unwrap()));
    }
    if children.len() > 4 {
        println!("  ... {} more", children.len() - 4);
    }
}

fn main() -> mctree::Result<()> {
    let nests: Vec<LoopNest> = parse_loopnests(REPORT)?;
    let base = baseline_configs(&nests).remove(0);

    show_batch("one tile size, parallelization on", &base, &[32], true);
    show_batch("three tile sizes, parallelization on", &base, &[4, 16, 64], true);
    show_batch("no tiling, no parallelization", &base, &[], false);

    // The closed form agrees with the enumeration.
    let (tilings, interchanges, parallelizations) = count_children(3, 3, true);
    println!(
        "\ncounted for depth 3, 3 sizes: {tilings} tilings + {interchanges} interchanges + \
         {parallelizations} parallelizations = {}",
        tilings + interchanges + parallelizations
    );

    // Children are configurations in their own right: expanding one walks
    // a level deeper. Tiling i,j,k leaves six loops, so the grandchild
    // batch is much wider.
    let child = derive_children(&base, &[32], true)
        .into_iter()
        .find(|c| {
            matches!(c.added(), Some(t) if t.to_string() == "tile on (i,j,k)")
        })
        .unwrap();
    let grandchildren = derive_children(&child, &[32], true);
    println!(
        "after tiling (i,j,k): depth {} nest, {} grandchildren",
        child.result.preorder().len(),
        grandchildren.len()
    );
    Ok(())
}
