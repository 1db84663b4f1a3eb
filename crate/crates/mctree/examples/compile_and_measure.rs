//! Drive the compile-and-measure evaluator end to end.
//!
//! The real workflow needs a compiler that understands the transformation
//! dialect. To keep the example self-contained it installs a tiny shell
//! script as the "compiler": it emits a canned loop-nest report when the
//! dialect flag asks for one, rejects interchanges the way a dependence
//! check would, and builds an "executable" whose runtime depends on the
//! pragmas in the rewritten source. Everything the evaluator does is real:
//! process spawning, loop-nest ingestion, per-experiment source rewriting,
//! wall-clock timing, adaptive timeouts.
//!
//! With an actual compiler the same search is one command:
//!
//! ```text
//! mctree autotune --max-experiments 100 -- clang -O2 gemm.c -o gemm
//! ```
//!
//! Run with: cargo run -p mctree --example compile_and_measure

use std::fs;
use std::os::unix::fs::PermissionsExt;
use std::path::Path;

use mctree::evaluate::{CompilerEvaluator, EvalRequest, Evaluator};
use mctree::search::{self, SearchParams};

const KERNEL: &str = "\
void sum3(int n, double *out, double a[n][n][n]) {
  for (int i = 0; i < n; i++)
    for (int j = 0; j < n; j++)
      for (int k = 0; k < n; k++)
        *out += a[i][j][k];
}
";

const NESTS: &str = r#"{"loopnests":[{"function":"sum3","loops":[
  {"id":"i","location":{"file":"sum3.c","line":2,"column":3},"subloops":[
    {"id":"j","location":{"file":"sum3.c","line":3,"column":5},"subloops":[
      {"id":"k","location":{"file":"sum3.c","line":4,"column":7}}]}]}]}]}"#;

const SHIM: &str = r#"#!/bin/sh
# Stand-in dialect compiler. Usage: minicc <source> -o <exe> [flags...]
src=$1
out=a.out
expect_out=0
for a in "$@"; do
  if [ "$expect_out" = 1 ]; then out=$a; expect_out=0; continue; fi
  case "$a" in
    -o) expect_out=1 ;;
    -polly-output-loopnest=*) cp "$(dirname "$0")/nests.json" "${a#-polly-output-loopnest=}" ;;
  esac
done
if grep -q 'interchange permutation' "$src"; then
  echo "$src:2:3: error: loop(s) not interchanged: dependence analysis rejected the permutation [-Werror,-Wpass-failed]" >&2
  exit 1
fi
ms=30
grep -q 'tile sizes' "$src" && ms=22
grep -q 'parallelize_thread' "$src" && ms=12
grep -q 'loop(i) parallelize_thread' "$src" && ms=6
printf '#!/bin/sh\nsleep 0.%02d\n' "$ms" > "$out"
chmod +x "$out"
"#;

fn executable(path: &Path, body: &str) {
    fs::write(path, body).unwrap();
    let mut perm = fs::metadata(path).unwrap().permissions();
    perm.set_mode(0o755);
    fs::set_permissions(path, perm).unwrap();
}

fn main() -> mctree::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let source = dir.path().join("sum3.c");
    fs::write(&source, KERNEL).unwrap();
    fs::write(dir.path().join("nests.json"), NESTS).unwrap();
    let minicc = dir.path().join("minicc");
    executable(&minicc, SHIM);

    let cmdline = vec![
        minicc.display().to_string(),
        source.display().to_string(),
        "-o".into(),
        dir.path().join("sum3").display().to_string(),
    ];
    let request = EvalRequest::new(cmdline, &source)?.with_repeats(2)?;
    let mut evaluator = CompilerEvaluator::new(request)?;
    println!("evaluator identity: {}", evaluator.identity());

    let mut params = SearchParams::new(&[32], true);
    params.max_experiments = Some(20);
    let result = search::run(&mut evaluator, &params, None, |e, is_new_best| {
        let what = e
            .added()
            .map(|(_, t)| t.to_string())
            .unwrap_or_else(|| "baseline".into());
        let time = match e.outcome.seconds() {
            Some(s) => format!("{s:.3}s"),
            None => e.outcome.status_str().into(),
        };
        let marker = if is_new_best { "  << best" } else { "" };
        println!("[{:>2}] {time:>14}  {what}{marker}", e.number);
    })?;

    let best = result.best_experiment().unwrap();
    println!("\nbest configuration:");
    for line in best.pragma_lines().concat() {
        println!("  {line}");
    }
    let rejected = result
        .experiments
        .iter()
        .filter(|e| !e.outcome.is_ok())
        .count();
    println!("{rejected} candidates were rejected by the compiler and scored as failures");
    Ok(())
}
