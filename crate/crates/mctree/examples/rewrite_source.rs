//! Rewrite a C kernel for one configuration.
//!
//! The tuner never touches the loop bodies. It names every source loop
//! with an id pragma and stacks the configuration's transformation pragmas
//! above the first loop of the nest; the compiler does the actual
//! restructuring. Stripping the inserted lines recovers the original file
//! byte for byte.
//!
//! Run with: cargo run -p mctree --example rewrite_source

use mctree::loopmodel::{Loop, LoopNest};
use mctree::rewrite::{render_config, rewrite_source, strip_pragmas};
use mctree::search::baseline_configs;
use mctree::{derive_children, Configuration};

const SOURCE: &str = "\
void gemm(int n, double C[n][n], double A[n][n], double B[n][n]) {
  for (int i = 0; i < n; i++)
    for (int j = 0; j < n; j++)
      for (int k = 0; k < n; k++)
        C[i][j] += A[i][k] * B[k][j];
}
";

fn main() -> mctree::Result<()> {
    // Normally parsed from the compiler's report; built by hand here so the
    // example is self-contained. Lines and columns point at the `for`s.
    let nest = LoopNest {
        function: "gemm".into(),
        roots: vec![Loop::source("i", "gemm.c", 2, 3).with_children(vec![
            Loop::source("j", "gemm.c", 3, 5)
                .with_children(vec![Loop::source("k", "gemm.c", 4, 7)]),
        ])],
    };

    // Walk two levels down the tree: tile (i,j,k) by 64, then parallelize
    // the outermost floor loop the tiling introduced.
    let base = baseline_configs(std::slice::from_ref(&nest)).remove(0);
    let tiled = pick(&base, &[64], "tile on (i,j,k)");
    let config = pick(&tiled, &[64], "parallelize_thread on (loop1)");

    println!("pragmas for this configuration:");
    for line in render_config(&config) {
        println!("  {line}");
    }

    let rewritten = rewrite_source(SOURCE, &nest, &config)?;
    println!("\nrewritten source:\n{rewritten}");

    assert_eq!(strip_pragmas(&rewritten), SOURCE);
    println!("strip_pragmas recovers the original exactly");
    Ok(())
}

/// First child whose added transformation matches `what`.
fn pick(config: &Configuration, tile_sizes: &[u64], what: &str) -> Configuration {
    derive_children(config, tile_sizes, true)
        .into_iter()
        .find(|c| c.added().unwrap().to_string() == what)
        .unwrap()
}
