//! Crate-wide error type.

use std::io;
use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed loop-nest JSON. `offset` is the byte offset of the error in
    /// the input text.
    #[error("loop nest JSON is malformed at byte {offset} (line {line}, column {column}): {message}")]
    Parse {
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },

    /// Structurally valid JSON that violates the loop-nest schema.
    #[error("invalid loop nest: {message} (loop `{loop_id}`)")]
    Validation { loop_id: String, message: String },

    /// A loop id that does not exist in the nest.
    #[error("no loop named `{id}` in the nest")]
    UnknownLoop { id: String },

    /// A transformation whose preconditions do not hold on the given nest.
    #[error("cannot apply {transformation}: {rule}")]
    NotApplicable {
        transformation: String,
        rule: String,
    },

    /// Source rewriting failed (location outside the file, colliding
    /// insertion points).
    #[error("cannot rewrite source: {0}")]
    Rewrite(String),

    /// A malformed evaluation request (missing source argument, `-c`, ...).
    #[error("invalid evaluation request: {0}")]
    InvalidRequest(String),

    /// The subprocess could not be started at all. Kept distinct from a
    /// compile failure: a missing compiler binary is an infrastructure
    /// problem, not a property of the configuration under test.
    #[error("failed to spawn `{program}`: {source}")]
    Spawn {
        program: String,
        #[source]
        source: io::Error,
    },

    /// The baseline compile ran but did not produce the loop-nest JSON file.
    #[error("compiler did not write the loop nest file `{path}`; is the loop-nest output flag supported?")]
    MissingLoopNests { path: PathBuf },

    /// The baseline failed to compile or run; nothing can be tuned.
    #[error("baseline evaluation failed ({status}): {excerpt}")]
    BaselineFailed { status: String, excerpt: String },

    /// An invalid synthetic cost model description.
    #[error("invalid cost model: {0}")]
    CostModel(String),

    /// A corrupt or unreadable experiment log.
    #[error("bad experiment log: {0}")]
    Log(String),

    /// The log was produced under different parameters than the resume
    /// request.
    #[error("log does not match this run ({field}: logged {logged}, requested {requested}); refusing to resume")]
    ResumeMismatch {
        field: &'static str,
        logged: String,
        requested: String,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}
