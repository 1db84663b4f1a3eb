//! The transformation catalogue and search-space derivation.
//!
//! A [`Configuration`] is an ordered list of transformations applied to a
//! baseline nest. Children of a configuration are derived by appending one
//! more transformation; the space is a tree, not a DAG, and no duplicate
//! detection is attempted. Because tiled loops can be tiled again, the tree
//! is conceptually infinite.

use std::collections::BTreeSet;
use std::fmt;

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::loopmodel::{perfect_subnests, Loop, LoopNest, LoopOrigin};

/// One loop transformation, expressible as a single pragma.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transformation {
    /// Strip-mine each listed loop. The n chain loops are replaced by 2n:
    /// the floor (inter-tile) loops outermost in order, then the tile
    /// (intra-tile) loops. `floor_ids`/`tile_ids` name the new loops so
    /// later transformations can refer to them; they are either both empty
    /// (purely a pragma, not structurally applicable) or both of the same
    /// length as `applied_ids`.
    Tile {
        applied_ids: Vec<String>,
        /// Tile edge lengths, all at least 2.
        sizes: Vec<u64>,
        floor_ids: Vec<String>,
        tile_ids: Vec<String>,
    },
    /// Reorder a perfect sub-nest. `permutation` holds the same ids as
    /// `applied_ids` in their new outermost-first order and must differ
    /// from it.
    Interchange {
        applied_ids: Vec<String>,
        permutation: Vec<String>,
    },
    /// Distribute iterations of one loop across threads. A parallelized
    /// loop takes no further transformations.
    ParallelizeThread { applied_id: String },
}

impl Transformation {
    /// Checks internal shape invariants (independent of any nest).
    pub fn validate(&self) -> Result<()> {
        let fail = |rule: &str| -> Result<()> {
            Err(Error::NotApplicable {
                transformation: self.to_string(),
                rule: rule.into(),
            })
        };
        match self {
            Transformation::Tile {
                applied_ids,
                sizes,
                floor_ids,
                tile_ids,
            } => {
                if applied_ids.is_empty() {
                    return fail("tile needs at least one loop");
                }
                if sizes.len() != applied_ids.len() {
                    return fail("one tile size per tiled loop");
                }
                if sizes.iter().any(|&s| s < 2) {
                    return fail("tile sizes must be at least 2");
                }
                let named = !floor_ids.is_empty() || !tile_ids.is_empty();
                if named
                    && (floor_ids.len() != applied_ids.len()
                        || tile_ids.len() != applied_ids.len())
                {
                    return fail("floor_ids and tile_ids must both match the tiled loop count");
                }
                if !all_distinct(applied_ids.iter().chain(floor_ids).chain(tile_ids)) {
                    return fail("loop ids of a tile must be pairwise distinct");
                }
                Ok(())
            }
            Transformation::Interchange {
                applied_ids,
                permutation,
            } => {
                if applied_ids.len() < 2 {
                    return fail("interchange needs at least two loops");
                }
                if !all_distinct(applied_ids.iter()) {
                    return fail("interchanged loop ids must be distinct");
                }
                let a: BTreeSet<_> = applied_ids.iter().collect();
                let p: BTreeSet<_> = permutation.iter().collect();
                if a != p || permutation.len() != applied_ids.len() {
                    return fail("permutation must reorder exactly the applied ids");
                }
                if permutation == applied_ids {
                    return fail("permutation must differ from the original order");
                }
                Ok(())
            }
            Transformation::ParallelizeThread { .. } => Ok(()),
        }
    }
}

fn all_distinct<'a>(ids: impl Iterator<Item = &'a String>) -> bool {
    let mut seen = BTreeSet::new();
    ids.into_iter().all(|id| seen.insert(id))
}

impl fmt::Display for Transformation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transformation::Tile { applied_ids, .. } => {
                write!(f, "tile on ({})", applied_ids.join(","))
            }
            Transformation::Interchange { applied_ids, .. } => {
                write!(f, "interchange on ({})", applied_ids.join(","))
            }
            Transformation::ParallelizeThread { applied_id } => {
                write!(f, "parallelize_thread on ({applied_id})")
            }
        }
    }
}

/// A node of the search tree: a transformation list for one loop nest plus
/// the structure it produces.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    /// Which nest of the document this configuration transforms.
    pub nest_index: usize,
    /// Applied in order on top of the baseline nest.
    pub transformations: Vec<Transformation>,
    /// The nest after applying `transformations`; kept in sync by
    /// construction and reproducible by replaying the list.
    pub result: LoopNest,
    /// Next number for machine-generated `loopN` ids.
    pub fresh_id_counter: u64,
}

impl Configuration {
    /// The untransformed root configuration for one nest.
    pub fn baseline(nest_index: usize, nest: LoopNest, fresh_id_counter: u64) -> Configuration {
        Configuration {
            nest_index,
            transformations: Vec::new(),
            result: nest,
            fresh_id_counter,
        }
    }

    /// The transformation this configuration added to its parent.
    pub fn added(&self) -> Option<&Transformation> {
        self.transformations.last()
    }
}

/// Applies one transformation to a nest, returning the new structure.
///
/// The input nest is untouched; loop ids stay unique; source-origin loops
/// keep their locations while loops created or moved here have none.
pub fn apply(nest: &LoopNest, t: &Transformation) -> Result<LoopNest> {
    t.validate()?;
    match t {
        Transformation::Tile {
            applied_ids,
            floor_ids,
            tile_ids,
            ..
        } => {
            if floor_ids.is_empty() {
                return Err(Error::NotApplicable {
                    transformation: t.to_string(),
                    rule: "structural application needs floor_ids/tile_ids to name the new loops"
                        .into(),
                });
            }
            let existing: BTreeSet<String> =
                nest.preorder().iter().map(|l| l.id.clone()).collect();
            if let Some(clash) = floor_ids.iter().chain(tile_ids).find(|id| existing.contains(*id))
            {
                return Err(Error::NotApplicable {
                    transformation: t.to_string(),
                    rule: format!("new loop id `{clash}` already exists in the nest"),
                });
            }
            rebuild_chain(nest, t, applied_ids, |chain, body| {
                let mut below = body;
                for tid in tile_ids.iter().rev() {
                    below = vec![fresh_loop(tid, below)];
                }
                for fid in floor_ids.iter().rev() {
                    below = vec![fresh_loop(fid, below)];
                }
                drop(chain);
                below.pop().expect("tile builds at least one loop")
            })
        }
        Transformation::Interchange {
            applied_ids,
            permutation,
        } => rebuild_chain(nest, t, applied_ids, |chain, body| {
            let mut by_id: Vec<(String, Loop)> =
                chain.into_iter().map(|l| (l.id.clone(), l)).collect();
            let mut below = body;
            for (new_pos, id) in permutation.iter().enumerate().rev() {
                let idx = by_id.iter().position(|(i, _)| i == id).expect("validated");
                let (_, mut l) = by_id.swap_remove(idx);
                if applied_ids[new_pos] != l.id {
                    l.origin = LoopOrigin::Interchanged;
                    l.location = None;
                }
                l.children = below;
                below = vec![l];
            }
            below.pop().expect("interchange rebuilds the chain")
        }),
        Transformation::ParallelizeThread { applied_id } => {
            let mut result = nest.clone();
            let target = find_mut(&mut result.roots, applied_id).ok_or_else(|| {
                Error::UnknownLoop {
                    id: applied_id.clone(),
                }
            })?;
            if target.parallelized {
                return Err(Error::NotApplicable {
                    transformation: t.to_string(),
                    rule: "loop is already parallelized".into(),
                });
            }
            target.parallelized = true;
            Ok(result)
        }
    }
}

fn fresh_loop(id: &str, children: Vec<Loop>) -> Loop {
    Loop {
        id: id.to_string(),
        location: None,
        children,
        parallelized: false,
        origin: LoopOrigin::Tiled,
    }
}

fn find_mut<'a>(loops: &'a mut [Loop], id: &str) -> Option<&'a mut Loop> {
    for l in loops {
        if l.id == id {
            return Some(l);
        }
        if let Some(hit) = find_mut(&mut l.children, id) {
            return Some(hit);
        }
    }
    None
}

/// Detaches the chain rooted at `ids[0]`, hands (chain loops, children of
/// the innermost) to `build`, and splices the returned loop back in place.
fn rebuild_chain(
    nest: &LoopNest,
    t: &Transformation,
    ids: &[String],
    build: impl FnOnce(Vec<Loop>, Vec<Loop>) -> Loop,
) -> Result<LoopNest> {
    fn take_chain(mut head: Loop, ids: &[String], t: &Transformation) -> Result<(Vec<Loop>, Vec<Loop>)> {
        let mut chain = Vec::new();
        for (idx, want) in ids.iter().enumerate() {
            if head.id != *want {
                return Err(Error::NotApplicable {
                    transformation: t.to_string(),
                    rule: format!("applied ids are not a perfect sub-nest (expected `{want}`, found `{}`)", head.id),
                });
            }
            if head.parallelized {
                return Err(Error::NotApplicable {
                    transformation: t.to_string(),
                    rule: format!("loop `{}` is parallelized", head.id),
                });
            }
            if idx + 1 == ids.len() {
                let body = std::mem::take(&mut head.children);
                chain.push(head);
                return Ok((chain, body));
            }
            if head.children.len() != 1 {
                return Err(Error::NotApplicable {
                    transformation: t.to_string(),
                    rule: format!(
                        "applied ids are not a perfect sub-nest (loop `{}` has {} children)",
                        head.id,
                        head.children.len()
                    ),
                });
            }
            let next = head.children.pop().expect("length checked");
            chain.push(head);
            head = next;
        }
        unreachable!("ids is non-empty");
    }

    fn splice(
        loops: Vec<Loop>,
        ids: &[String],
        t: &Transformation,
        build: &mut Option<impl FnOnce(Vec<Loop>, Vec<Loop>) -> Loop>,
    ) -> Result<Vec<Loop>> {
        let mut out = Vec::with_capacity(loops.len());
        for mut l in loops {
            if build.is_some() && l.id == ids[0] {
                let (chain, body) = take_chain(l, ids, t)?;
                let b = build.take().expect("checked above");
                out.push(b(chain, body));
            } else {
                l.children = splice(std::mem::take(&mut l.children), ids, t, build)?;
                out.push(l);
            }
        }
        Ok(out)
    }

    let mut build = Some(build);
    let roots = splice(nest.roots.clone(), ids, t, &mut build)?;
    if build.is_some() {
        return Err(Error::UnknownLoop { id: ids[0].clone() });
    }
    Ok(LoopNest {
        function: nest.function.clone(),
        roots,
    })
}

/// Derives every child configuration of `config`, in deterministic order:
/// all tilings (sub-nests in preorder, size vectors in lexicographic order
/// over the sorted tile sizes), then all interchanges (permutations in
/// lexicographic order, each whole-nest reordering emitted exactly once),
/// then one parallelization per non-parallelized loop in preorder.
///
/// Fresh loop ids are drawn from the parent's `fresh_id_counter`, so
/// sibling tilings reuse the same names and derivation is reproducible.
/// Tile size values below 2 are ignored.
pub fn derive_children(
    config: &Configuration,
    tile_sizes: &[u64],
    enable_parallel: bool,
) -> Vec<Configuration> {
    let sizes: Vec<u64> = tile_sizes
        .iter()
        .copied()
        .filter(|&s| s >= 2)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let subnests = perfect_subnests(&config.result);
    let mut children = Vec::new();

    let mut push = |t: Transformation, fresh_used: u64| {
        let result = apply(&config.result, &t).expect("derived transformations always apply");
        let mut transformations = config.transformations.clone();
        transformations.push(t);
        children.push(Configuration {
            nest_index: config.nest_index,
            transformations,
            result,
            fresh_id_counter: config.fresh_id_counter + fresh_used,
        });
    };

    if !sizes.is_empty() {
        for sub in &subnests {
            let n = sub.ids.len();
            let floor_ids: Vec<String> = (0..n)
                .map(|i| format!("loop{}", config.fresh_id_counter + i as u64))
                .collect();
            let tile_ids: Vec<String> = (0..n)
                .map(|i| format!("loop{}", config.fresh_id_counter + (n + i) as u64))
                .collect();
            for combo in (0..n).map(|_| sizes.iter().copied()).multi_cartesian_product() {
                push(
                    Transformation::Tile {
                        applied_ids: sub.ids.clone(),
                        sizes: combo,
                        floor_ids: floor_ids.clone(),
                        tile_ids: tile_ids.clone(),
                    },
                    2 * n as u64,
                );
            }
        }
    }

    for sub in &subnests {
        let n = sub.ids.len();
        if n < 2 {
            continue;
        }
        for perm in (0..n).permutations(n) {
            // Emit a permutation only where it moves both ends of the
            // sub-nest: orderings that keep the outermost loop in place
            // arise from a shorter sub-nest further down, orderings that
            // keep the innermost in place from a shorter one further up.
            // Each whole-nest reordering is generated exactly once this
            // way, d!-1 in total for a d-deep nest.
            if perm[0] == 0 || perm[n - 1] == n - 1 {
                continue;
            }
            push(
                Transformation::Interchange {
                    applied_ids: sub.ids.clone(),
                    permutation: perm.iter().map(|&i| sub.ids[i].clone()).collect(),
                },
                0,
            );
        }
    }

    if enable_parallel {
        for l in config.result.preorder() {
            if !l.parallelized {
                push(
                    Transformation::ParallelizeThread {
                        applied_id: l.id.clone(),
                    },
                    0,
                );
            }
        }
    }

    children
}

/// Closed-form child counts for a perfect nest of the given depth:
/// (tilings, interchanges, parallelizations).
///
/// A depth-d perfect nest has d-k+1 sub-nests of length k, each tiled with
/// every of the t^k size vectors; interchange contributes every non-trivial
/// whole-nest reordering exactly once (d!-1); parallelization one child per
/// loop when enabled.
pub fn count_children(depth: u64, tile_size_count: u64, enable_parallel: bool) -> (u64, u64, u64) {
    let d = depth as u128;
    let t = tile_size_count as u128;
    let tilings: u128 = (1..=d).map(|k| (d - k + 1) * t.pow(k as u32)).sum();
    let interchanges: u128 = (1..=d).product::<u128>() - 1;
    let parallelizations = if enable_parallel { depth } else { 0 };
    (
        u64::try_from(tilings).unwrap_or(u64::MAX),
        u64::try_from(interchanges).unwrap_or(u64::MAX),
        parallelizations,
    )
}
