//! Candidate evaluation.
//!
//! An evaluator turns a configuration into an [`Outcome`]: a wall-clock
//! time, or one of three failure kinds. Two implementations exist, behind
//! the [`Evaluator`] trait so the search driver does not care which:
//!
//! - [`CompilerEvaluator`] spawns the user's compiler command on the
//!   rewritten source and times the produced executable. This is the real
//!   thing and inherently non-deterministic.
//! - [`SyntheticEvaluator`] scores configurations with a declarative
//!   [`CostModel`]. Fully deterministic, no subprocesses; this is what the
//!   tests and most examples use.
//!
//! Measurements are strictly serialized; nothing here runs concurrently.

mod compiler;
mod process;
mod synthetic;

pub use compiler::CompilerEvaluator;
pub use process::{run_with_timeout, RunOutput};
pub use synthetic::{synthetic_evaluate, CostModel, SyntheticEvaluator, TileAffinity};

use std::path::PathBuf;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::loopmodel::LoopNest;
use crate::transforms::Configuration;

/// What happened when a configuration was evaluated.
#[derive(Debug, Clone, PartialEq)]
pub enum OutcomeKind {
    /// Compiled, ran, and took this many seconds (minimum over repeats).
    Ok { seconds: f64 },
    /// The compiler exited non-zero, typically because a transformation
    /// failed its legality check under `-Werror=pass-failed`.
    CompileFailed,
    /// The executable exited non-zero.
    RunFailed,
    /// Compile or run exceeded the time limit and was killed.
    Timeout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub kind: OutcomeKind,
    /// Tail of the subprocess output, for diagnostics. Empty on synthetic
    /// successes.
    pub log_excerpt: String,
}

impl Outcome {
    pub fn ok(seconds: f64) -> Outcome {
        Outcome {
            kind: OutcomeKind::Ok { seconds },
            log_excerpt: String::new(),
        }
    }

    pub fn is_ok(&self) -> bool {
        matches!(self.kind, OutcomeKind::Ok { .. })
    }

    pub fn seconds(&self) -> Option<f64> {
        match self.kind {
            OutcomeKind::Ok { seconds } => Some(seconds),
            _ => None,
        }
    }

    /// Stable status word used in logs and CSV exports.
    pub fn status_str(&self) -> &'static str {
        match self.kind {
            OutcomeKind::Ok { .. } => "ok",
            OutcomeKind::CompileFailed => "compile-failed",
            OutcomeKind::RunFailed => "run-failed",
            OutcomeKind::Timeout => "timeout",
        }
    }

    /// Inverse of [`Outcome::status_str`] plus the seconds column.
    pub fn from_status(status: &str, seconds: Option<f64>) -> Result<Outcome> {
        let kind = match (status, seconds) {
            ("ok", Some(seconds)) => OutcomeKind::Ok { seconds },
            ("ok", None) => {
                return Err(Error::Log("ok outcome without seconds".into()));
            }
            ("compile-failed", _) => OutcomeKind::CompileFailed,
            ("run-failed", _) => OutcomeKind::RunFailed,
            ("timeout", _) => OutcomeKind::Timeout,
            _ => return Err(Error::Log(format!("unknown outcome status `{status}`"))),
        };
        Ok(Outcome {
            kind,
            log_excerpt: String::new(),
        })
    }
}

/// How to compile and run the program under test.
#[derive(Debug, Clone)]
pub struct EvalRequest {
    /// The user's full compiler invocation, program first. Must mention the
    /// source file exactly once and may not contain `-c`: the tuner needs a
    /// runnable executable, not an object file.
    pub compiler_cmdline: Vec<String>,
    /// The source file to substitute with rewritten variants.
    pub source: PathBuf,
    /// Extra flags appended to every compile.
    pub extra_flags: Vec<String>,
    /// Limit for each compile and each run; `None` means no limit.
    pub timeout: Option<Duration>,
    /// Times to run the executable; the minimum wall-clock time counts.
    pub repeats: u32,
}

impl EvalRequest {
    pub fn new(compiler_cmdline: Vec<String>, source: impl Into<PathBuf>) -> Result<EvalRequest> {
        let source = source.into();
        if compiler_cmdline.len() < 2 {
            return Err(Error::InvalidRequest(
                "compiler command line needs a program and a source file".into(),
            ));
        }
        if compiler_cmdline.iter().any(|a| a == "-c") {
            return Err(Error::InvalidRequest(
                "`-c` produces an object file; the tuner must run the result".into(),
            ));
        }
        let source_str = source.to_string_lossy();
        let mentions = compiler_cmdline[1..]
            .iter()
            .filter(|a| a.as_str() == source_str)
            .count();
        if mentions != 1 {
            return Err(Error::InvalidRequest(format!(
                "source `{source_str}` must appear exactly once in the command line (found {mentions} times)"
            )));
        }
        Ok(EvalRequest {
            compiler_cmdline,
            source,
            extra_flags: Vec::new(),
            timeout: None,
            repeats: 1,
        })
    }

    pub fn with_extra_flags(mut self, flags: Vec<String>) -> EvalRequest {
        self.extra_flags = flags;
        self
    }

    pub fn with_timeout(mut self, timeout: Option<Duration>) -> EvalRequest {
        self.timeout = timeout;
        self
    }

    pub fn with_repeats(mut self, repeats: u32) -> Result<EvalRequest> {
        if repeats == 0 {
            return Err(Error::InvalidRequest("repeats must be at least 1".into()));
        }
        self.repeats = repeats;
        Ok(self)
    }
}

/// Produces outcomes for configurations. Implementations must be
/// deterministic if they want log resume to reproduce runs bit for bit;
/// the compiler evaluator naturally is not.
pub trait Evaluator {
    /// Stable description of the evaluation setup. Hashed into log headers
    /// so a resume against different parameters is refused.
    fn identity(&self) -> String;

    /// Evaluates the untransformed program and reports the loop nests found
    /// in it. The search aborts unless this returns an `Ok` outcome.
    fn evaluate_baseline(&mut self) -> Result<(Vec<LoopNest>, Outcome)>;

    /// Announces the measured baseline time, for adaptive timeouts.
    fn calibrate(&mut self, baseline_seconds: f64) {
        let _ = baseline_seconds;
    }

    /// Evaluates one derived configuration (one entry per nest, the entry
    /// for each nest pairing with `baseline_nests` at the same index).
    fn evaluate(
        &mut self,
        number: u64,
        baseline_nests: &[LoopNest],
        configs: &[Configuration],
    ) -> Result<Outcome>;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cmdline(args: &[&str]) -> Vec<String> {
        args.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn request_requires_the_source_exactly_once() {
        assert!(EvalRequest::new(cmdline(&["clang", "x.c", "-o", "x"]), "x.c").is_ok());
        assert!(EvalRequest::new(cmdline(&["clang", "-o", "x"]), "x.c").is_err());
        assert!(EvalRequest::new(cmdline(&["clang", "x.c", "x.c"]), "x.c").is_err());
    }

    #[test]
    fn request_rejects_object_only_compiles() {
        let err = EvalRequest::new(cmdline(&["clang", "-c", "x.c"]), "x.c").unwrap_err();
        assert!(matches!(err, Error::InvalidRequest(_)));
    }

    #[test]
    fn request_rejects_zero_repeats() {
        let req = EvalRequest::new(cmdline(&["clang", "x.c"]), "x.c").unwrap();
        assert!(req.with_repeats(0).is_err());
    }

    #[test]
    fn outcome_status_words_round_trip() {
        for outcome in [
            Outcome::ok(1.25),
            Outcome {
                kind: OutcomeKind::CompileFailed,
                log_excerpt: String::new(),
            },
            Outcome {
                kind: OutcomeKind::RunFailed,
                log_excerpt: String::new(),
            },
            Outcome {
                kind: OutcomeKind::Timeout,
                log_excerpt: String::new(),
            },
        ] {
            let back = Outcome::from_status(outcome.status_str(), outcome.seconds()).unwrap();
            assert_eq!(back.kind, outcome.kind);
        }
        assert!(Outcome::from_status("ok", None).is_err());
        assert!(Outcome::from_status("exploded", None).is_err());
    }
}
