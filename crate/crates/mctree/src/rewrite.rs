//! Pragma rendering and source rewriting.
//!
//! A configuration is communicated to the compiler purely through
//! directives: every source loop gets an id pragma immediately above its
//! `for` statement, and the transformation pragmas are stacked above the
//! first loop of the nest, separated from it by one blank line. Nothing
//! else in the file changes, so stripping the inserted lines recovers the
//! original source.
//!
//! The dialect, one directive per line, ids and numbers comma-separated
//! without spaces:
//!
//! ```text
//! #pragma clang loop id(i)
//! #pragma clang loop(i,j,k) tile sizes(448,2048,256) floor_ids(i1,j1,k1) tile_ids(i2,j2,k2)
//! #pragma clang loop(i,j,k) interchange permutation(j,k,i)
//! #pragma clang loop(i) parallelize_thread
//! ```
//!
//! The `floor_ids`/`tile_ids` clauses are omitted when the transformation
//! does not name its new loops.

use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::loopmodel::{Loop, LoopNest};
use crate::transforms::{Configuration, Transformation};

/// Renders one transformation as its pragma line.
pub fn render_pragma(t: &Transformation) -> String {
    match t {
        Transformation::Tile {
            applied_ids,
            sizes,
            floor_ids,
            tile_ids,
        } => {
            let sizes: Vec<String> = sizes.iter().map(u64::to_string).collect();
            let mut s = format!(
                "#pragma clang loop({}) tile sizes({})",
                applied_ids.join(","),
                sizes.join(",")
            );
            if !floor_ids.is_empty() {
                s.push_str(&format!(
                    " floor_ids({}) tile_ids({})",
                    floor_ids.join(","),
                    tile_ids.join(",")
                ));
            }
            s
        }
        Transformation::Interchange {
            applied_ids,
            permutation,
        } => format!(
            "#pragma clang loop({}) interchange permutation({})",
            applied_ids.join(","),
            permutation.join(",")
        ),
        Transformation::ParallelizeThread { applied_id } => {
            format!("#pragma clang loop({applied_id}) parallelize_thread")
        }
    }
}

/// The id directive naming one source loop.
pub fn render_id_pragma(id: &str) -> String {
    format!("#pragma clang loop id({id})")
}

/// All pragma lines of a configuration, in application order.
pub fn render_config(config: &Configuration) -> Vec<String> {
    config.transformations.iter().map(render_pragma).collect()
}

/// A block of lines to insert above one source line. Empty entries become
/// blank lines; all others take over the indentation of the line they
/// precede.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Insertion {
    /// 1-based source line the block goes above.
    pub line: u32,
    /// Column of the anchoring loop, used to order same-line insertions.
    pub column: u32,
    pub lines: Vec<String>,
}

/// An ordered set of insertions for one source file.
#[derive(Debug, Clone, Default)]
pub struct RewritePlan {
    /// Sorted by (line, column); at most one insertion per position.
    pub insertions: Vec<Insertion>,
    /// Where the rewritten file should land, when the caller wants it on
    /// disk (`rewritten/<original name>` by convention).
    pub output_path: Option<PathBuf>,
}

impl RewritePlan {
    pub fn with_output_path(mut self, path: impl Into<PathBuf>) -> Self {
        self.output_path = Some(path.into());
        self
    }

    /// Applies the plan to the source text.
    ///
    /// Untouched lines are preserved byte for byte, including their line
    /// endings; inserted lines reuse the ending of the line they precede.
    pub fn apply(&self, source: &str) -> Result<String> {
        let lines = split_lines(source);
        for ins in &self.insertions {
            if ins.line == 0 || ins.line as usize > lines.len() {
                return Err(Error::Rewrite(format!(
                    "insertion at line {} is outside the file ({} lines)",
                    ins.line,
                    lines.len()
                )));
            }
        }
        let mut out = String::with_capacity(source.len() + 64 * self.insertions.len());
        let mut pending = self.insertions.iter().peekable();
        for (idx, (content, terminator)) in lines.iter().enumerate() {
            let lineno = (idx + 1) as u32;
            while pending.peek().is_some_and(|i| i.line == lineno) {
                let ins = pending.next().expect("peeked");
                let indent: String = content
                    .chars()
                    .take_while(|c| *c == ' ' || *c == '\t')
                    .collect();
                let term = if terminator.is_empty() { "\n" } else { terminator };
                for l in &ins.lines {
                    if !l.is_empty() {
                        out.push_str(&indent);
                        out.push_str(l);
                    }
                    out.push_str(term);
                }
            }
            out.push_str(content);
            out.push_str(terminator);
        }
        Ok(out)
    }
}

fn split_lines(source: &str) -> Vec<(&str, &str)> {
    let mut out = Vec::new();
    let mut rest = source;
    while !rest.is_empty() {
        match rest.find('\n') {
            Some(nl) => {
                let (content, term) = if nl > 0 && rest.as_bytes()[nl - 1] == b'\r' {
                    (&rest[..nl - 1], &rest[nl - 1..=nl])
                } else {
                    (&rest[..nl], &rest[nl..=nl])
                };
                out.push((content, term));
                rest = &rest[nl + 1..];
            }
            None => {
                out.push((rest, ""));
                rest = "";
            }
        }
    }
    out
}

/// Builds the insertion plan for one or more nests of the same file.
///
/// Every source-located loop gets its id pragma; each nest with a non-empty
/// transformation list additionally gets the pragma block plus a blank
/// separator above its first loop. Nests pair with the configuration that
/// transforms them; pass the baseline nest, not the transformed result.
pub fn plan_rewrite(pairs: &[(&LoopNest, &Configuration)]) -> Result<RewritePlan> {
    let mut insertions: Vec<Insertion> = Vec::new();
    for (nest, config) in pairs {
        let located: Vec<&Loop> = nest
            .preorder()
            .into_iter()
            .filter(|l| l.location.is_some())
            .collect();
        if located.is_empty() {
            if config.transformations.is_empty() {
                continue;
            }
            return Err(Error::Rewrite(format!(
                "nest of `{}` has no located loops to anchor the pragma block",
                nest.function
            )));
        }
        let first = located
            .iter()
            .min_by_key(|l| {
                let loc = l.location.as_ref().expect("filtered");
                (loc.line, loc.column)
            })
            .expect("non-empty");
        for l in &located {
            let loc = l.location.as_ref().expect("filtered");
            let mut lines = Vec::new();
            if l.id == first.id && !config.transformations.is_empty() {
                lines.extend(config.transformations.iter().map(render_pragma));
                lines.push(String::new());
            }
            lines.push(render_id_pragma(&l.id));
            insertions.push(Insertion {
                line: loc.line,
                column: loc.column,
                lines,
            });
        }
    }
    insertions.sort_by_key(|i| (i.line, i.column));
    for w in insertions.windows(2) {
        if w[0].line == w[1].line && w[0].column == w[1].column {
            return Err(Error::Rewrite(format!(
                "two insertions at line {} column {}",
                w[0].line, w[0].column
            )));
        }
    }
    Ok(RewritePlan {
        insertions,
        output_path: None,
    })
}

/// Rewrites a source file for one nest and configuration.
pub fn rewrite_source(source: &str, nest: &LoopNest, config: &Configuration) -> Result<String> {
    plan_rewrite(&[(nest, config)])?.apply(source)
}

/// Rewrites a source file for several nests at once (one configuration per
/// nest of the same file).
pub fn rewrite_source_multi(
    source: &str,
    pairs: &[(&LoopNest, &Configuration)],
) -> Result<String> {
    plan_rewrite(pairs)?.apply(source)
}

/// Removes everything [`RewritePlan::apply`] inserts: lines whose first
/// non-whitespace text is `#pragma clang loop`, plus the single blank
/// separator line directly following a transformation pragma block.
pub fn strip_pragmas(source: &str) -> String {
    let mut out = String::with_capacity(source.len());
    let mut after_transform_pragma = false;
    for (content, term) in split_lines(source) {
        let trimmed = content.trim_start_matches([' ', '\t']);
        if trimmed.starts_with("#pragma clang loop") {
            // Id pragmas attach directly to their loop; only the
            // transformation block is followed by a blank separator.
            after_transform_pragma = !trimmed.starts_with("#pragma clang loop id(");
            continue;
        }
        if after_transform_pragma && trimmed.is_empty() {
            after_transform_pragma = false;
            continue;
        }
        after_transform_pragma = false;
        out.push_str(content);
        out.push_str(term);
    }
    out
}
