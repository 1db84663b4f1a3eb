//! Compile-and-measure evaluation against a real compiler.
//!
//! The user hands over their full compiler command line. The baseline run
//! adds the loop nest report flag so the compiler tells us what it sees;
//! derived runs substitute the rewritten source, redirect `-o` into a
//! scratch directory, and add `-fopenmp -Werror=pass-failed` so a
//! transformation the compiler cannot legalize fails the compile instead
//! of being silently dropped.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use tempfile::TempDir;

use crate::error::{Error, Result};
use crate::loopmodel::{parse_loopnests, LoopNest};
use crate::rewrite::rewrite_source_multi;
use crate::transforms::Configuration;

use super::process::run_with_timeout;
use super::{EvalRequest, Evaluator, Outcome, OutcomeKind};

pub const DEFAULT_LOOPNEST_FLAG: &str = "-polly-output-loopnest";

pub struct CompilerEvaluator {
    request: EvalRequest,
    loopnest_flag: String,
    timeout_factor: f64,
    /// When set, per-experiment directories `exp<N>` under this root
    /// survive; otherwise scratch is deleted after each measurement.
    keep_dir: Option<PathBuf>,
    work: TempDir,
    source_text: Option<String>,
    /// Effective per-phase limit; calibration fills this in when the
    /// request did not fix one.
    timeout: Option<Duration>,
}

impl CompilerEvaluator {
    pub fn new(request: EvalRequest) -> Result<CompilerEvaluator> {
        let timeout = request.timeout;
        Ok(CompilerEvaluator {
            request,
            loopnest_flag: DEFAULT_LOOPNEST_FLAG.to_string(),
            timeout_factor: 10.0,
            keep_dir: None,
            work: TempDir::new()?,
            source_text: None,
            timeout,
        })
    }

    /// Overrides the `-mllvm` flag used to request the loop nest report.
    pub fn with_loopnest_flag(mut self, flag: impl Into<String>) -> CompilerEvaluator {
        self.loopnest_flag = flag.into();
        self
    }

    /// Timeout for derived runs as a multiple of the baseline time. Only
    /// used when the request does not fix a timeout itself.
    pub fn with_timeout_factor(mut self, factor: f64) -> CompilerEvaluator {
        self.timeout_factor = factor;
        self
    }

    /// Keeps every rewritten source and binary under `dir/exp<N>/`.
    pub fn keep_files_under(mut self, dir: impl Into<PathBuf>) -> CompilerEvaluator {
        self.keep_dir = Some(dir.into());
        self
    }

    fn source_text(&mut self) -> Result<&str> {
        if self.source_text.is_none() {
            self.source_text = Some(fs::read_to_string(&self.request.source)?);
        }
        Ok(self.source_text.as_deref().expect("just filled"))
    }

    /// Runs the executable `repeats` times and keeps the minimum.
    fn measure(&self, exe: &Path) -> Result<Outcome> {
        let argv = vec![invocable(exe)];
        let mut best: Option<f64> = None;
        for _ in 0..self.request.repeats {
            let run = run_with_timeout(&argv, self.timeout, None)?;
            if run.timed_out {
                return Ok(Outcome {
                    kind: OutcomeKind::Timeout,
                    log_excerpt: run.output_tail,
                });
            }
            if !run.success {
                return Ok(Outcome {
                    kind: OutcomeKind::RunFailed,
                    log_excerpt: run.output_tail,
                });
            }
            let seconds = run.elapsed.as_secs_f64();
            best = Some(best.map_or(seconds, |b: f64| b.min(seconds)));
        }
        Ok(Outcome::ok(best.expect("repeats is at least 1")))
    }
}

impl Evaluator for CompilerEvaluator {
    fn identity(&self) -> String {
        let mut parts = self.request.compiler_cmdline.clone();
        parts.extend(self.request.extra_flags.iter().cloned());
        parts.push(self.loopnest_flag.clone());
        parts.push(self.request.repeats.to_string());
        format!(
            "compile:{:016x}",
            crate::hash::fnv1a64(parts.join("\u{1f}").as_bytes())
        )
    }

    fn evaluate_baseline(&mut self) -> Result<(Vec<LoopNest>, Outcome)> {
        let json_path = self.work.path().join("loopnests.json");
        let mut argv = self.request.compiler_cmdline.clone();
        argv.extend(self.request.extra_flags.iter().cloned());
        argv.push("-mllvm".into());
        argv.push(format!("{}={}", self.loopnest_flag, json_path.display()));
        argv.push("-g".into());

        let compile = run_with_timeout(&argv, self.timeout, None)?;
        if compile.timed_out {
            return Ok((
                Vec::new(),
                Outcome {
                    kind: OutcomeKind::Timeout,
                    log_excerpt: compile.output_tail,
                },
            ));
        }
        if !compile.success {
            return Ok((
                Vec::new(),
                Outcome {
                    kind: OutcomeKind::CompileFailed,
                    log_excerpt: compile.output_tail,
                },
            ));
        }
        let json = fs::read_to_string(&json_path).map_err(|_| Error::MissingLoopNests {
            path: json_path.clone(),
        })?;
        let nests = parse_loopnests(&json)?;
        let exe = executable_from_cmdline(&self.request.compiler_cmdline);
        let outcome = self.measure(&exe)?;
        Ok((nests, outcome))
    }

    fn calibrate(&mut self, baseline_seconds: f64) {
        if self.request.timeout.is_none() {
            let limit = (baseline_seconds * self.timeout_factor).max(baseline_seconds + 5.0);
            self.timeout = Some(Duration::from_secs_f64(limit));
        }
    }

    fn evaluate(
        &mut self,
        number: u64,
        baseline_nests: &[LoopNest],
        configs: &[Configuration],
    ) -> Result<Outcome> {
        let exp_dir = match &self.keep_dir {
            Some(root) => root.join(format!("exp{number}")),
            None => self.work.path().join(format!("exp{number}")),
        };
        fs::create_dir_all(&exp_dir)?;

        let outcome = self.evaluate_in(&exp_dir, baseline_nests, configs);
        if self.keep_dir.is_none() {
            let _ = fs::remove_dir_all(&exp_dir);
        }
        outcome
    }
}

impl CompilerEvaluator {
    fn evaluate_in(
        &mut self,
        exp_dir: &Path,
        baseline_nests: &[LoopNest],
        configs: &[Configuration],
    ) -> Result<Outcome> {
        let source = self.source_text()?.to_string();
        let pairs: Vec<(&LoopNest, &Configuration)> = configs
            .iter()
            .map(|c| (&baseline_nests[c.nest_index], c))
            .collect();
        let rewritten = rewrite_source_multi(&source, &pairs)?;

        let file_name = self
            .request
            .source
            .file_name()
            .ok_or_else(|| Error::InvalidRequest("source path has no file name".into()))?;
        let rewritten_path = exp_dir.join(file_name);
        fs::write(&rewritten_path, rewritten)?;

        let exe = exp_dir.join(
            executable_from_cmdline(&self.request.compiler_cmdline)
                .file_name()
                .expect("executable paths end in a file name"),
        );
        let argv = derived_cmdline(&self.request, &rewritten_path, &exe);

        let compile = run_with_timeout(&argv, self.timeout, None)?;
        if compile.timed_out {
            return Ok(Outcome {
                kind: OutcomeKind::Timeout,
                log_excerpt: compile.output_tail,
            });
        }
        if !compile.success {
            return Ok(Outcome {
                kind: OutcomeKind::CompileFailed,
                log_excerpt: compile.output_tail,
            });
        }
        self.measure(&exe)
    }
}

/// Where the user's command line puts the executable: the `-o` argument, or
/// the classic default.
fn executable_from_cmdline(cmdline: &[String]) -> PathBuf {
    let mut args = cmdline.iter();
    while let Some(a) = args.next() {
        if a == "-o" {
            if let Some(target) = args.next() {
                return PathBuf::from(target);
            }
        }
    }
    PathBuf::from("a.out")
}

/// Path form that `exec` accepts for a freshly built binary: bare names get
/// a `./` prefix so they are not looked up in `PATH`.
fn invocable(path: &Path) -> String {
    let s = path.to_string_lossy().into_owned();
    if s.contains('/') {
        s
    } else {
        format!("./{s}")
    }
}

/// The user's command line with the source swapped for the rewritten copy,
/// `-o` redirected next to it, and the dialect flags appended.
fn derived_cmdline(request: &EvalRequest, rewritten: &Path, exe: &Path) -> Vec<String> {
    let source_str = request.source.to_string_lossy();
    let mut argv = Vec::with_capacity(request.compiler_cmdline.len() + 6);
    let mut saw_output = false;
    let mut redirect_next = false;
    for (i, arg) in request.compiler_cmdline.iter().enumerate() {
        if redirect_next {
            argv.push(exe.display().to_string());
            redirect_next = false;
            continue;
        }
        if i > 0 && arg.as_str() == source_str {
            argv.push(rewritten.display().to_string());
        } else if arg == "-o" {
            saw_output = true;
            redirect_next = true;
            argv.push(arg.clone());
        } else {
            argv.push(arg.clone());
        }
    }
    if !saw_output {
        argv.push("-o".into());
        argv.push(exe.display().to_string());
    }
    argv.extend(request.extra_flags.iter().cloned());
    argv.push("-fopenmp".into());
    argv.push("-Werror=pass-failed".into());
    argv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms::derive_children;
    use std::os::unix::fs::PermissionsExt;

    const KERNEL_SOURCE: &str = "void kern(int n) {\n  for (int i = 0; i < n; ++i)\n    ;\n}\n";
    const KERNEL_NESTS: &str = r#"{"loopnests":[{"function":"kern","loops":[{"location":{"file":"kern.c","line":2,"column":3},"subloops":[]}]}]}"#;

    fn write_script(path: &Path, body: &str) {
        fs::write(path, body).unwrap();
        let mut perm = fs::metadata(path).unwrap().permissions();
        perm.set_mode(0o755);
        fs::set_permissions(path, perm).unwrap();
    }

    /// A stand-in compiler: records its arguments, honors `-o`, emits the
    /// canned loop nest report when the dialect flag asks for one, and
    /// installs `payload.sh` as the built executable.
    fn install_shim(dir: &Path, payload: &str) -> PathBuf {
        fs::write(dir.join("loopnests.json"), KERNEL_NESTS).unwrap();
        write_script(&dir.join("payload.sh"), payload);
        let shim = dir.join("fakecc");
        write_script(
            &shim,
            &format!(
                r#"#!/bin/sh
dir={dir}
printf '%s\n' "$*" >> "$dir/invocations.txt"
out=a.out
json=
expect_out=0
for a in "$@"; do
  if [ "$expect_out" = 1 ]; then out=$a; expect_out=0; continue; fi
  case "$a" in
    -o) expect_out=1 ;;
    -polly-output-loopnest=*) json=${{a#-polly-output-loopnest=}} ;;
  esac
done
if [ -n "$json" ]; then cp "$dir/loopnests.json" "$json"; fi
cp "$dir/payload.sh" "$out"
chmod +x "$out"
"#,
                dir = dir.display()
            ),
        );
        shim
    }

    struct Setup {
        dir: tempfile::TempDir,
        evaluator: CompilerEvaluator,
    }

    fn setup(payload: &str) -> Setup {
        let dir = tempfile::tempdir().unwrap();
        let shim = install_shim(dir.path(), payload);
        let source = dir.path().join("kern.c");
        fs::write(&source, KERNEL_SOURCE).unwrap();
        let exe = dir.path().join("kern");
        let cmdline = vec![
            shim.display().to_string(),
            source.display().to_string(),
            "-o".to_string(),
            exe.display().to_string(),
        ];
        let request = EvalRequest::new(cmdline, &source).unwrap();
        let evaluator = CompilerEvaluator::new(request).unwrap();
        Setup { dir, evaluator }
    }

    fn invocations(dir: &Path) -> Vec<String> {
        fs::read_to_string(dir.join("invocations.txt"))
            .unwrap_or_default()
            .lines()
            .map(str::to_string)
            .collect()
    }

    #[test]
    fn baseline_reports_nests_and_time() {
        let mut s = setup("#!/bin/sh\nexit 0\n");
        let (nests, outcome) = s.evaluator.evaluate_baseline().unwrap();
        assert_eq!(nests.len(), 1);
        assert_eq!(nests[0].function, "kern");
        assert_eq!(nests[0].roots[0].id, "loop1");
        assert!(outcome.is_ok());
        assert!(outcome.seconds().unwrap() >= 0.0);

        let inv = invocations(s.dir.path());
        assert_eq!(inv.len(), 1);
        assert!(inv[0].contains("-mllvm -polly-output-loopnest="));
        assert!(inv[0].ends_with("-g"));
    }

    #[test]
    fn baseline_without_report_is_an_error() {
        let mut s = setup("#!/bin/sh\nexit 0\n");
        // A shim that never writes the report: strip the flag handling by
        // pointing the evaluator at a different flag name.
        s.evaluator = {
            let source = s.dir.path().join("kern.c");
            let shim = s.dir.path().join("fakecc");
            let exe = s.dir.path().join("kern");
            let cmdline = vec![
                shim.display().to_string(),
                source.display().to_string(),
                "-o".to_string(),
                exe.display().to_string(),
            ];
            CompilerEvaluator::new(EvalRequest::new(cmdline, &source).unwrap())
                .unwrap()
                .with_loopnest_flag("-some-other-flag")
        };
        let err = s.evaluator.evaluate_baseline().unwrap_err();
        assert!(matches!(err, Error::MissingLoopNests { .. }));
    }

    #[test]
    fn compile_failure_carries_the_diagnostic() {
        let dir = tempfile::tempdir().unwrap();
        let shim = dir.path().join("fakecc");
        write_script(&shim, "#!/bin/sh\necho 'error: no such intrinsic' >&2\nexit 1\n");
        let source = dir.path().join("kern.c");
        fs::write(&source, KERNEL_SOURCE).unwrap();
        let cmdline = vec![shim.display().to_string(), source.display().to_string()];
        let mut evaluator =
            CompilerEvaluator::new(EvalRequest::new(cmdline, &source).unwrap()).unwrap();
        let (nests, outcome) = evaluator.evaluate_baseline().unwrap();
        assert!(nests.is_empty());
        assert_eq!(outcome.kind, OutcomeKind::CompileFailed);
        assert!(outcome.log_excerpt.contains("no such intrinsic"));
    }

    #[test]
    fn derived_run_substitutes_source_and_output() {
        let mut s = setup("#!/bin/sh\nexit 0\n");
        let (nests, _) = s.evaluator.evaluate_baseline().unwrap();
        let base = Configuration::baseline(0, nests[0].clone(), 2);
        let children = derive_children(&base, &[4], true);
        let outcome = s
            .evaluator
            .evaluate(1, &nests, std::slice::from_ref(&children[0]))
            .unwrap();
        assert!(outcome.is_ok());

        let inv = invocations(s.dir.path());
        assert_eq!(inv.len(), 2);
        let derived = &inv[1];
        assert!(derived.contains("exp1/kern.c"), "{derived}");
        assert!(derived.contains("exp1/kern"), "{derived}");
        assert!(!derived.contains(&format!("{}/kern.c ", s.dir.path().display())));
        assert!(derived.contains("-fopenmp"));
        assert!(derived.ends_with("-Werror=pass-failed"));
        assert!(!derived.contains("-mllvm"));
    }

    #[test]
    fn scratch_is_deleted_unless_keeping() {
        let mut s = setup("#!/bin/sh\nexit 0\n");
        let keep_root = s.dir.path().join("rewritten");
        s.evaluator = {
            let source = s.dir.path().join("kern.c");
            let shim = s.dir.path().join("fakecc");
            let exe = s.dir.path().join("kern");
            let cmdline = vec![
                shim.display().to_string(),
                source.display().to_string(),
                "-o".to_string(),
                exe.display().to_string(),
            ];
            CompilerEvaluator::new(EvalRequest::new(cmdline, &source).unwrap())
                .unwrap()
                .keep_files_under(&keep_root)
        };
        let (nests, _) = s.evaluator.evaluate_baseline().unwrap();
        let base = Configuration::baseline(0, nests[0].clone(), 2);
        let children = derive_children(&base, &[4], false);
        s.evaluator.evaluate(3, &nests, &children[..1]).unwrap();

        let kept = keep_root.join("exp3").join("kern.c");
        let text = fs::read_to_string(&kept).unwrap();
        assert!(text.contains("#pragma clang loop"));
        assert!(text.contains("tile sizes(4)"));
    }

    #[test]
    fn failing_executable_is_run_failed() {
        let mut s = setup("#!/bin/sh\necho boom >&2\nexit 2\n");
        let (nests, outcome) = s.evaluator.evaluate_baseline().unwrap();
        assert!(nests.len() == 1);
        assert_eq!(outcome.kind, OutcomeKind::RunFailed);
        assert!(outcome.log_excerpt.contains("boom"));
    }

    #[test]
    fn repeats_run_the_executable_each_time() {
        let s = setup("#!/bin/sh\nexit 0\n");
        let marker = s.dir.path().join("runs.txt");
        let payload = format!("#!/bin/sh\necho run >> {}\nexit 0\n", marker.display());
        write_script(&s.dir.path().join("payload.sh"), &payload);
        let source = s.dir.path().join("kern.c");
        let shim = s.dir.path().join("fakecc");
        let exe = s.dir.path().join("kern");
        let cmdline = vec![
            shim.display().to_string(),
            source.display().to_string(),
            "-o".to_string(),
            exe.display().to_string(),
        ];
        let request = EvalRequest::new(cmdline, &source)
            .unwrap()
            .with_repeats(3)
            .unwrap();
        let mut evaluator = CompilerEvaluator::new(request).unwrap();
        let (_, outcome) = evaluator.evaluate_baseline().unwrap();
        assert!(outcome.is_ok());
        let runs = fs::read_to_string(&marker).unwrap();
        assert_eq!(runs.lines().count(), 3);
    }

    #[test]
    fn calibrate_sets_an_adaptive_timeout() {
        let mut s = setup("#!/bin/sh\nexit 0\n");
        assert!(s.evaluator.timeout.is_none());
        s.evaluator.calibrate(2.0);
        assert_eq!(s.evaluator.timeout, Some(Duration::from_secs_f64(20.0)));
        // Tiny baselines still get a usable grace period.
        s.evaluator.timeout = None;
        s.evaluator.request.timeout = None;
        s.evaluator.calibrate(0.01);
        assert_eq!(s.evaluator.timeout, Some(Duration::from_secs_f64(5.01)));
    }

    #[test]
    fn explicit_timeout_wins_over_calibration() {
        let dir = tempfile::tempdir().unwrap();
        let shim = install_shim(dir.path(), "#!/bin/sh\nexit 0\n");
        let source = dir.path().join("kern.c");
        fs::write(&source, KERNEL_SOURCE).unwrap();
        let cmdline = vec![shim.display().to_string(), source.display().to_string()];
        let request = EvalRequest::new(cmdline, &source)
            .unwrap()
            .with_timeout(Some(Duration::from_secs(7)));
        let mut evaluator = CompilerEvaluator::new(request).unwrap();
        evaluator.calibrate(100.0);
        assert_eq!(evaluator.timeout, Some(Duration::from_secs(7)));
    }

    #[test]
    fn cmdline_helpers_cover_the_edge_cases() {
        assert_eq!(
            executable_from_cmdline(&["cc".into(), "x.c".into()]),
            PathBuf::from("a.out")
        );
        assert_eq!(
            executable_from_cmdline(&["cc".into(), "-o".into(), "bin/x".into(), "x.c".into()]),
            PathBuf::from("bin/x")
        );
        assert_eq!(invocable(Path::new("a.out")), "./a.out");
        assert_eq!(invocable(Path::new("/tmp/a.out")), "/tmp/a.out");

        let request = EvalRequest::new(vec!["cc".into(), "-O3".into(), "x.c".into()], "x.c")
            .unwrap()
            .with_extra_flags(vec!["-lm".into()]);
        let argv = derived_cmdline(&request, Path::new("exp/x.c"), Path::new("exp/a.out"));
        assert_eq!(
            argv,
            vec![
                "cc", "-O3", "exp/x.c", "-o", "exp/a.out", "-lm", "-fopenmp",
                "-Werror=pass-failed"
            ]
        );
    }
}
