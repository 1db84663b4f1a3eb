//! Loop nest structure and JSON ingestion.
//!
//! The compiler side emits one JSON document per compilation describing
//! every loop nest it found, keyed by function. This module parses that
//! document into [`LoopNest`] trees, assigns stable ids to unnamed loops,
//! and answers the structural queries the transformation generator needs,
//! most importantly the enumeration of perfect sub-nests.
//!
//! Document schema:
//!
//! ```json
//! {
//!   "loopnests": [
//!     {
//!       "function": "kernel_gemm",
//!       "loops": [
//!         {
//!           "id": "i",
//!           "location": { "file": "gemm.c", "line": 4, "column": 3 },
//!           "subloops": [ ... ]
//!         }
//!       ]
//!     }
//!   ]
//! }
//! ```
//!
//! `id` is optional; unnamed loops are assigned `loop1`, `loop2`, ... in
//! document order. `location` is mandatory for every parsed loop, since the
//! rewriter needs it to place id pragmas.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Position of a loop statement in the original source.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SourceLocation {
    pub file: String,
    /// 1-based line of the `for` statement.
    pub line: u32,
    /// 1-based column of the `for` statement.
    pub column: u32,
}

/// How a loop came to exist in the current configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopOrigin {
    /// Present in the original source; always has a [`SourceLocation`].
    Source,
    /// Created by a tiling (a floor or tile loop); no source location.
    Tiled,
    /// Moved by an interchange; no source location.
    Interchanged,
}

/// One loop in a nest, possibly with nested children.
#[derive(Debug, Clone, PartialEq)]
pub struct Loop {
    /// Unique within its [`LoopNest`].
    pub id: String,
    /// Present exactly for source-origin loops.
    pub location: Option<SourceLocation>,
    pub children: Vec<Loop>,
    /// A parallelized loop is never transformed again.
    pub parallelized: bool,
    pub origin: LoopOrigin,
}

impl Loop {
    /// A source loop at a known location, no children yet.
    pub fn source(id: impl Into<String>, file: impl Into<String>, line: u32, column: u32) -> Loop {
        Loop {
            id: id.into(),
            location: Some(SourceLocation {
                file: file.into(),
                line,
                column,
            }),
            children: Vec::new(),
            parallelized: false,
            origin: LoopOrigin::Source,
        }
    }

    pub fn with_children(mut self, children: Vec<Loop>) -> Loop {
        self.children = children;
        self
    }
}

/// All top-level loops of one function.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopNest {
    pub function: String,
    /// Top-level loops in source order.
    pub roots: Vec<Loop>,
}

/// An ordered, outermost-first run of loop ids in which every loop except
/// the last has exactly one child, none is parallelized, and each id is the
/// parent of the next. Tiling and interchange apply to exactly these.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerfectSubNest {
    pub ids: Vec<String>,
}

impl PerfectSubNest {
    pub fn depth(&self) -> usize {
        self.ids.len()
    }
}

impl LoopNest {
    /// All loops of the nest, parents before children, siblings in order.
    pub fn preorder(&self) -> Vec<&Loop> {
        fn walk<'a>(l: &'a Loop, out: &mut Vec<&'a Loop>) {
            out.push(l);
            for c in &l.children {
                walk(c, out);
            }
        }
        let mut out = Vec::new();
        for r in &self.roots {
            walk(r, &mut out);
        }
        out
    }

    /// Nesting depth of `id` (roots are at depth 0), if present.
    pub fn depth_of(&self, id: &str) -> Option<usize> {
        fn walk(l: &Loop, id: &str, depth: usize) -> Option<usize> {
            if l.id == id {
                return Some(depth);
            }
            l.children.iter().find_map(|c| walk(c, id, depth + 1))
        }
        self.roots.iter().find_map(|r| walk(r, id, 0))
    }
}

/// Looks up one loop by id.
pub fn find_loop<'n>(nest: &'n LoopNest, id: &str) -> Result<&'n Loop> {
    nest.preorder()
        .into_iter()
        .find(|l| l.id == id)
        .ok_or_else(|| Error::UnknownLoop { id: id.to_string() })
}

/// Enumerates every perfect sub-nest of `nest`.
///
/// For each non-parallelized loop `L`, the chain starting at `L` extends
/// downward while the current loop has exactly one child and that child is
/// not parallelized; one sub-nest is emitted per prefix length of the
/// chain. Start loops come in preorder, lengths ascending, so a perfect
/// d-deep nest yields d(d+1)/2 sub-nests.
pub fn perfect_subnests(nest: &LoopNest) -> Vec<PerfectSubNest> {
    let mut out = Vec::new();
    for start in nest.preorder() {
        if start.parallelized {
            continue;
        }
        let mut chain = vec![start.id.clone()];
        out.push(PerfectSubNest { ids: chain.clone() });
        let mut cur = start;
        while cur.children.len() == 1 && !cur.children[0].parallelized {
            cur = &cur.children[0];
            chain.push(cur.id.clone());
            out.push(PerfectSubNest { ids: chain.clone() });
        }
    }
    out
}

// ---------------------------------------------------------------------------
// JSON schema

#[derive(Debug, Serialize, Deserialize)]
struct RawDoc {
    loopnests: Vec<RawNest>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawNest {
    function: String,
    #[serde(default)]
    loops: Vec<RawLoop>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawLoop {
    #[serde(skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    location: Option<RawLocation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    subloops: Vec<RawLoop>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawLocation {
    file: String,
    line: u32,
    column: u32,
}

fn byte_offset_of(text: &str, line: usize, column: usize) -> usize {
    // serde_json reports 1-based line/column; column counts characters.
    let mut offset = 0;
    for (idx, l) in text.split('\n').enumerate() {
        if idx + 1 == line {
            let col = column.saturating_sub(1);
            offset += l.chars().take(col).map(char::len_utf8).sum::<usize>();
            return offset.min(text.len());
        }
        offset += l.len() + 1;
    }
    text.len()
}

/// Parses a loop-nest JSON document into one [`LoopNest`] per function.
///
/// Unnamed loops get ids `loop1`, `loop2`, ... in document order, counted
/// across the whole document. Sibling loops are ordered by source position;
/// two loops at the identical position are rejected, as are duplicate ids
/// and loops without a location.
pub fn parse_loopnests(json: &str) -> Result<Vec<LoopNest>> {
    let doc: RawDoc = serde_json::from_str(json).map_err(|e| Error::Parse {
        offset: byte_offset_of(json, e.line(), e.column()),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;

    let mut next_auto = 1u64;
    let mut nests = Vec::new();
    for raw in doc.loopnests {
        let mut roots = Vec::new();
        for l in raw.loops {
            roots.push(convert_loop(l, &mut next_auto)?);
        }
        sort_siblings(&mut roots);
        let nest = LoopNest {
            function: raw.function,
            roots,
        };
        validate_nest(&nest)?;
        nests.push(nest);
    }
    Ok(nests)
}

fn convert_loop(raw: RawLoop, next_auto: &mut u64) -> Result<Loop> {
    let id = match raw.id {
        Some(id) if !id.is_empty() => id,
        _ => {
            let id = format!("loop{next_auto}");
            *next_auto += 1;
            id
        }
    };
    let location = raw.location.ok_or_else(|| Error::Validation {
        loop_id: id.clone(),
        message: "missing location".into(),
    })?;
    if location.file.is_empty() || location.line == 0 || location.column == 0 {
        return Err(Error::Validation {
            loop_id: id,
            message: "location must have a file and 1-based line/column".into(),
        });
    }
    let mut children = Vec::new();
    for c in raw.subloops {
        children.push(convert_loop(c, next_auto)?);
    }
    sort_siblings(&mut children);
    Ok(Loop {
        id,
        location: Some(SourceLocation {
            file: location.file,
            line: location.line,
            column: location.column,
        }),
        children,
        parallelized: false,
        origin: LoopOrigin::Source,
    })
}

fn sort_siblings(loops: &mut [Loop]) {
    loops.sort_by(|a, b| a.location.cmp(&b.location));
}

fn validate_nest(nest: &LoopNest) -> Result<()> {
    let loops = nest.preorder();
    for (i, a) in loops.iter().enumerate() {
        for b in &loops[i + 1..] {
            if a.id == b.id {
                return Err(Error::Validation {
                    loop_id: a.id.clone(),
                    message: "duplicate loop id".into(),
                });
            }
            if a.location == b.location {
                return Err(Error::Validation {
                    loop_id: b.id.clone(),
                    message: format!("same source position as loop `{}`", a.id),
                });
            }
        }
    }
    Ok(())
}

/// Serializes nests back into the canonical document schema.
///
/// Only source-origin loops carry locations, so this is intended for
/// baseline nests (every parsed nest round-trips structurally).
pub fn loopnests_to_json(nests: &[LoopNest]) -> String {
    fn conv(l: &Loop) -> RawLoop {
        RawLoop {
            id: Some(l.id.clone()),
            location: l.location.as_ref().map(|loc| RawLocation {
                file: loc.file.clone(),
                line: loc.line,
                column: loc.column,
            }),
            subloops: l.children.iter().map(conv).collect(),
        }
    }
    let doc = RawDoc {
        loopnests: nests
            .iter()
            .map(|n| RawNest {
                function: n.function.clone(),
                loops: n.roots.iter().map(conv).collect(),
            })
            .collect(),
    };
    serde_json::to_string(&doc).expect("loop nests always serialize")
}

/// Largest N over ids of the form `loopN` anywhere in the document, plus
/// one. Fresh ids drawn from this counter can never collide.
pub fn next_fresh_loop_number(nests: &[LoopNest]) -> u64 {
    let mut max = 0u64;
    for nest in nests {
        for l in nest.preorder() {
            if let Some(rest) = l.id.strip_prefix("loop") {
                if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) {
                    if let Ok(n) = rest.parse::<u64>() {
                        max = max.max(n);
                    }
                }
            }
        }
    }
    max + 1
}
