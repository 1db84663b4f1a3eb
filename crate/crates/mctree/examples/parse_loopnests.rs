//! Parse a loop-nest report and look around in it.
//!
//! The compiler (or anything else) describes the loops of a translation
//! unit as JSON: one entry per function, loops nested via `subloops`, each
//! loop with the source position of its `for` statement. Loops may carry
//! ids; unnamed ones are numbered `loop1`, `loop2`, ... across the whole
//! document.
//!
//! Run with: cargo run -p mctree --example parse_loopnests

use mctree::loopmodel::{loopnests_to_json, parse_loopnests, perfect_subnests};

const REPORT: &str = r#"{
  "loopnests": [
    {
      "function": "gemm",
      "loops": [
        {
          "id": "i",
          "location": {"file": "gemm.c", "line": 4, "column": 3},
          "subloops": [
            {
              "id": "j",
              "location": {"file": "gemm.c", "line": 5, "column": 5},
              "subloops": [
                {"id": "k", "location": {"file": "gemm.c", "line": 6, "column": 7}}
              ]
            }
          ]
        }
      ]
    },
    {
      "function": "scale",
      "loops": [
        {"location": {"file": "gemm.c", "line": 14, "column": 3}}
      ]
    }
  ]
}"#;

fn main() -> mctree::Result<()> {
    let nests = parse_loopnests(REPORT)?;

    for nest in &nests {
        println!("function {}:", nest.function);
        for l in nest.preorder() {
            let depth = nest.depth_of(&l.id).unwrap();
            let loc = l.location.as_ref().unwrap();
            println!(
                "  {}{} at {}:{}:{}",
                "  ".repeat(depth),
                l.id,
                loc.file,
                loc.line,
                loc.column
            );
        }
        // Tiling and interchange apply to perfect sub-nests only: straight
        // chains where every loop but the last has exactly one child.
        for sub in perfect_subnests(nest) {
            println!("  perfect sub-nest ({})", sub.ids.join(","));
        }
    }

    // The canonical serialization is what search logs embed.
    println!("\ncanonical form:\n{}", loopnests_to_json(&nests));
    Ok(())
}
