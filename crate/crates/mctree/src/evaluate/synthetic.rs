//! Deterministic cost model standing in for compile-and-measure.
//!
//! A [`CostModel`] is a small JSON document declaring how the fictitious
//! machine responds to transformations: how much parallelizing at each
//! depth helps, which tile sizes it likes, which pragmas its "compiler"
//! rejects. Scoring a configuration is pure arithmetic over the rendered
//! pragmas and the derived loop structure, so searches replay exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::{fnv1a64, unit_noise};
use crate::loopmodel::{parse_loopnests, loopnests_to_json, Loop, LoopNest};
use crate::rewrite::render_pragma;
use crate::transforms::{Configuration, Transformation};

use super::{Evaluator, Outcome, OutcomeKind};

/// Preference for particular tile sizes, per loop position of a tiling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileAffinity {
    /// The sizes this machine likes best, outermost first.
    pub preferred: Vec<u64>,
    /// Runtime multiplier achieved at exactly the preferred sizes.
    #[serde(default = "default_best_factor")]
    pub best_factor: f64,
    /// How quickly the benefit decays with log2-distance from `preferred`.
    #[serde(default = "default_distance_weight")]
    pub distance_weight: f64,
}

fn default_best_factor() -> f64 {
    0.25
}

fn default_distance_weight() -> f64 {
    0.05
}

/// Declarative model of a machine, including the loop nests its program
/// supposedly contains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Untransformed runtime in seconds.
    pub base_time: f64,
    /// Speedup from the outermost parallelized loop, indexed by its depth
    /// (0 = a root loop). Deeper than the list reaches clamps to the last
    /// entry; an empty list means parallelizing never helps.
    #[serde(default)]
    pub parallel_speedup: Vec<f64>,
    #[serde(default)]
    pub tile_affinity: Option<TileAffinity>,
    /// A configuration whose rendered pragmas contain any of these
    /// substrings fails to compile, imitating a legality rejection.
    #[serde(default)]
    pub illegal_pragma_patterns: Vec<String>,
    /// Relative measurement noise amplitude; 0 keeps the model exact.
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub noise_seed: u64,
    /// The loop nests of the modeled program, in the same schema the
    /// compiler emits.
    pub loopnests: serde_json::Value,
}

impl CostModel {
    /// A quiet model: no speedups, no affinity, no noise.
    pub fn new(base_time: f64, nests: &[LoopNest]) -> CostModel {
        let loopnests = serde_json::from_str(&loopnests_to_json(nests))
            .expect("canonical loop nest JSON is valid");
        CostModel {
            base_time,
            parallel_speedup: Vec::new(),
            tile_affinity: None,
            illegal_pragma_patterns: Vec::new(),
            noise_sigma: 0.0,
            noise_seed: 0,
            loopnests,
        }
    }

    pub fn from_json(text: &str) -> Result<CostModel> {
        let model: CostModel =
            serde_json::from_str(text).map_err(|e| Error::CostModel(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cost model serializes")
    }

    /// Parses the embedded loop nests through the regular document parser,
    /// so a model is rejected for exactly the same reasons a compiler
    /// report would be.
    pub fn nests(&self) -> Result<Vec<LoopNest>> {
        parse_loopnests(&self.loopnests.to_string())
    }

    fn validate(&self) -> Result<()> {
        if !(self.base_time > 0.0) || !self.base_time.is_finite() {
            return Err(Error::CostModel("base_time must be positive".into()));
        }
        if self.parallel_speedup.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::CostModel("parallel_speedup entries must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.noise_sigma) {
            return Err(Error::CostModel("noise_sigma must be in [0, 1)".into()));
        }
        if let Some(aff) = &self.tile_affinity {
            if aff.preferred.is_empty() {
                return Err(Error::CostModel("tile_affinity.preferred must be non-empty".into()));
            }
            if aff.preferred.iter().any(|&s| s < 2) {
                return Err(Error::CostModel("preferred tile sizes must be at least 2".into()));
            }
            if !(aff.best_factor > 0.0) || !aff.best_factor.is_finite() {
                return Err(Error::CostModel("best_factor must be positive".into()));
            }
            if !(aff.distance_weight >= 0.0) || !aff.distance_weight.is_finite() {
                return Err(Error::CostModel("distance_weight must be non-negative".into()));
            }
        }
        self.nests()?;
        Ok(())
    }
}

/// Depth of the outermost parallelized loop across all result nests, if any.
fn outermost_parallel_depth(configs: &[Configuration]) -> Option<usize> {
    fn walk(l: &Loop, depth: usize, best: &mut Option<usize>) {
        if l.parallelized && best.map_or(true, |b| depth < b) {
            *best = Some(depth);
        }
        for child in &l.children {
            walk(child, depth + 1, best);
        }
    }
    let mut best = None;
    for config in configs {
        for root in &config.result.roots {
            walk(root, 0, &mut best);
        }
    }
    best
}

/// Multiplier for one tiling: `best_factor` at the preferred sizes, decaying
/// with squared log2 distance. Length mismatches pad with size 1, which is
/// maximally far from any real preference.
fn tile_kernel(aff: &TileAffinity, sizes: &[u64]) -> f64 {
    let len = sizes.len().max(aff.preferred.len());
    let mut distance = 0.0;
    for i in 0..len {
        let got = *sizes.get(i).unwrap_or(&1) as f64;
        let want = *aff.preferred.get(i).unwrap_or(&1) as f64;
        let d = got.log2() - want.log2();
        distance += d * d;
    }
    aff.best_factor + aff.distance_weight * distance
}

/// Scores one global configuration (one entry per nest; empty for the
/// baseline). Pure: equal inputs give equal outcomes.
pub fn synthetic_evaluate(model: &CostModel, configs: &[Configuration]) -> Outcome {
    let pragmas: Vec<String> = configs
        .iter()
        .flat_map(|c| c.transformations.iter().map(render_pragma))
        .collect();

    for pattern in &model.illegal_pragma_patterns {
        if let Some(hit) = pragmas.iter().find(|p| p.contains(pattern.as_str())) {
            return Outcome {
                kind: OutcomeKind::CompileFailed,
                log_excerpt: format!(
                    "error: could not apply requested transformation: {hit} (matches illegal pattern `{pattern}`)"
                ),
            };
        }
    }

    let speedup = match outermost_parallel_depth(configs) {
        Some(depth) if !model.parallel_speedup.is_empty() => {
            let idx = depth.min(model.parallel_speedup.len() - 1);
            model.parallel_speedup[idx]
        }
        _ => 1.0,
    };

    let tile_penalty = match &model.tile_affinity {
        Some(aff) => configs
            .iter()
            .flat_map(|c| c.transformations.iter())
            .filter_map(|t| match t {
                Transformation::Tile { sizes, .. } => Some(tile_kernel(aff, sizes)),
                _ => None,
            })
            .fold(None::<f64>, |best, k| {
                Some(best.map_or(k, |b| b.min(k)))
            })
            .unwrap_or(1.0),
        None => 1.0,
    };

    let mut seconds = model.base_time / speedup * tile_penalty;
    if model.noise_sigma > 0.0 {
        let noise = unit_noise(model.noise_seed, pragmas.join("\n").as_bytes());
        seconds *= 1.0 + model.noise_sigma * noise;
    }
    Outcome::ok(seconds)
}

/// [`Evaluator`] wrapper around a [`CostModel`].
#[derive(Debug, Clone)]
pub struct SyntheticEvaluator {
    pub model: CostModel,
}

impl SyntheticEvaluator {
    pub fn new(model: CostModel) -> SyntheticEvaluator {
        SyntheticEvaluator { model }
    }
}

impl Evaluator for SyntheticEvaluator {
    fn identity(&self) -> String {
        // serde_json::Value orders map keys, so this is stable across runs.
        let canonical = serde_json::to_string(&self.model).expect("cost model serializes");
        format!("synthetic:{:016x}", fnv1a64(canonical.as_bytes()))
    }

    fn evaluate_baseline(&mut self) -> Result<(Vec<LoopNest>, Outcome)> {
        let nests = self.model.nests()?;
        Ok((nests, synthetic_evaluate(&self.model, &[])))
    }

    fn evaluate(
        &mut self,
        _number: u64,
        _baseline_nests: &[LoopNest],
        configs: &[Configuration],
    ) -> Result<Outcome> {
        Ok(synthetic_evaluate(&self.model, configs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loopmodel::LoopNest;
    use crate::transforms::derive_children;

    fn nest3() -> LoopNest {
        LoopNest {
            function: "kernel".into(),
            roots: vec![Loop::source("i", "k.c", 3, 3).with_children(vec![
                Loop::source("j", "k.c", 4, 5).with_children(vec![Loop::source("k", "k.c", 5, 7)]),
            ])],
        }
    }

    fn model3() -> CostModel {
        let mut model = CostModel::new(8.0, &[nest3()]);
        model.parallel_speedup = vec![50.0, 6.0, 2.0];
        model
    }

    fn baseline(model: &CostModel) -> Configuration {
        let nests = model.nests().unwrap();
        let counter = crate::loopmodel::next_fresh_loop_number(&nests);
        Configuration::baseline(0, nests[0].clone(), counter)
    }

    #[test]
    fn baseline_scores_exactly_base_time() {
        let model = model3();
        let outcome = synthetic_evaluate(&model, &[]);
        assert_eq!(outcome.seconds(), Some(8.0));
        assert!(outcome.log_excerpt.is_empty());
    }

    fn parallelizations(children: Vec<Configuration>) -> Vec<Configuration> {
        children
            .into_iter()
            .filter(|c| {
                matches!(c.added(), Some(Transformation::ParallelizeThread { .. }))
            })
            .collect()
    }

    #[test]
    fn outermost_parallel_level_wins_and_clamps() {
        let model = model3();
        let base = baseline(&model);
        let children = parallelizations(derive_children(&base, &[], true));
        assert_eq!(children.len(), 3);
        let times: Vec<f64> = children
            .iter()
            .map(|c| {
                synthetic_evaluate(&model, std::slice::from_ref(c))
                    .seconds()
                    .unwrap()
            })
            .collect();
        assert_eq!(times, vec![8.0 / 50.0, 8.0 / 6.0, 8.0 / 2.0]);

        // Parallelizing deeper on top of an outer parallelization cannot
        // change the level: the outermost one decides.
        let outer = &children[0];
        let grand = derive_children(outer, &[], true);
        for g in &grand {
            let t = synthetic_evaluate(&model, std::slice::from_ref(g))
                .seconds()
                .unwrap();
            assert_eq!(t, 8.0 / 50.0);
        }
    }

    #[test]
    fn speedup_list_clamps_to_last_entry() {
        let mut model = model3();
        model.parallel_speedup = vec![10.0];
        let base = baseline(&model);
        let children = parallelizations(derive_children(&base, &[], true));
        for c in &children {
            let t = synthetic_evaluate(&model, std::slice::from_ref(c))
                .seconds()
                .unwrap();
            assert_eq!(t, 0.8);
        }
    }

    #[test]
    fn tile_affinity_prefers_the_declared_sizes() {
        let mut model = model3();
        model.parallel_speedup = Vec::new();
        model.tile_affinity = Some(TileAffinity {
            preferred: vec![4, 16],
            best_factor: 0.25,
            distance_weight: 0.05,
        });
        let base = baseline(&model);
        let children = derive_children(&base, &[4, 16], false);
        let mut best: Option<f64> = None;
        for c in children.iter().filter(|c| {
            matches!(c.added(), Some(Transformation::Tile { sizes, .. }) if sizes.len() == 2)
        }) {
            let t = synthetic_evaluate(&model, std::slice::from_ref(c))
                .seconds()
                .unwrap();
            if best.map_or(true, |b| t < b) {
                best = Some(t);
            }
            if let Some(Transformation::Tile { sizes, .. }) = c.added() {
                if sizes == &[4, 16] {
                    assert_eq!(t, 8.0 * 0.25);
                }
            }
        }
        assert_eq!(best.unwrap(), 2.0);
    }

    #[test]
    fn length_mismatch_pads_with_ones() {
        let aff = TileAffinity {
            preferred: vec![4, 16],
            best_factor: 0.25,
            distance_weight: 0.05,
        };
        // One-dimensional tiling against a two-dimensional preference: the
        // missing position counts as size 1, four octaves from 16.
        let k = tile_kernel(&aff, &[4]);
        assert_eq!(k, 0.25 + 0.05 * 16.0);
        // Exact match.
        assert_eq!(tile_kernel(&aff, &[4, 16]), 0.25);
    }

    #[test]
    fn illegal_pattern_fails_compilation() {
        let mut model = model3();
        model.illegal_pragma_patterns = vec!["interchange".into()];
        let base = baseline(&model);
        let children = derive_children(&base, &[4], true);
        let mut interchanges = 0;
        for c in &children {
            let outcome = synthetic_evaluate(&model, std::slice::from_ref(c));
            if matches!(c.added(), Some(Transformation::Interchange { .. })) {
                interchanges += 1;
                assert_eq!(outcome.kind, OutcomeKind::CompileFailed);
                assert!(outcome.log_excerpt.contains("interchange"));
            } else {
                assert!(outcome.is_ok());
            }
        }
        assert_eq!(interchanges, 5);
    }

    #[test]
    fn noise_is_deterministic_and_bounded() {
        let mut model = model3();
        model.noise_sigma = 0.02;
        model.noise_seed = 7;
        let base = baseline(&model);
        let children = derive_children(&base, &[4], true);
        for c in &children {
            let a = synthetic_evaluate(&model, std::slice::from_ref(c));
            let b = synthetic_evaluate(&model, std::slice::from_ref(c));
            assert_eq!(a, b);
            let t = a.seconds().unwrap();
            let clean = {
                let mut quiet = model.clone();
                quiet.noise_sigma = 0.0;
                synthetic_evaluate(&quiet, std::slice::from_ref(c))
                    .seconds()
                    .unwrap()
            };
            assert!((t / clean - 1.0).abs() <= 0.02 + 1e-12);
        }
    }

    #[test]
    fn json_round_trip_preserves_the_model() {
        let mut model = model3();
        model.tile_affinity = Some(TileAffinity {
            preferred: vec![8, 8],
            best_factor: 0.5,
            distance_weight: 0.1,
        });
        model.illegal_pragma_patterns = vec!["loop(j)".into()];
        let back = CostModel::from_json(&model.to_json()).unwrap();
        assert_eq!(back, model);
        assert_eq!(
            SyntheticEvaluator::new(back).identity(),
            SyntheticEvaluator::new(model).identity()
        );
    }

    #[test]
    fn validation_rejects_bad_models() {
        let good = model3();
        let mut m = good.clone();
        m.base_time = 0.0;
        assert!(CostModel::from_json(&m.to_json()).is_err());
        let mut m = good.clone();
        m.parallel_speedup = vec![0.0];
        assert!(CostModel::from_json(&m.to_json()).is_err());
        let mut m = good.clone();
        m.noise_sigma = 1.0;
        assert!(CostModel::from_json(&m.to_json()).is_err());
        let mut m = good.clone();
        m.tile_affinity = Some(TileAffinity {
            preferred: vec![],
            best_factor: 0.25,
            distance_weight: 0.05,
        });
        assert!(CostModel::from_json(&m.to_json()).is_err());
        let mut m = good;
        m.loopnests = serde_json::json!({ "loopnests": [{ "loops": [] }] });
        assert!(CostModel::from_json(&m.to_json()).is_err());
    }

    #[test]
    fn evaluator_reports_nests_and_baseline() {
        let mut ev = SyntheticEvaluator::new(model3());
        let (nests, outcome) = ev.evaluate_baseline().unwrap();
        assert_eq!(nests.len(), 1);
        assert_eq!(nests[0].function, "kernel");
        assert_eq!(outcome.seconds(), Some(8.0));
        assert!(ev.identity().starts_with("synthetic:"));
    }
}
