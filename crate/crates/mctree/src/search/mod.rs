//! Best-first tree search over transformation configurations.
//!
//! The baseline program is the root. Expanding a node evaluates every
//! configuration reachable by appending one transformation to it; the node
//! with the best time among the not-yet-expanded ones is expanded next.
//! The tree is unbounded (tiled loops can be tiled again), so the search
//! runs until a budget stops it or, on small spaces, until no unexpanded
//! candidate is left.
//!
//! Every measurement is appended to a JSONL log the moment it finishes.
//! Because child derivation is deterministic, the log needs to store only
//! outcomes: a resume replays the derivation, fills in the logged results,
//! verifies the rendered pragmas still match, and picks up exactly where
//! the run stopped, mid-expansion or not.

mod logfile;

pub use logfile::{read_log, LogContents, LogHeader, LogRecord, LogWriter, LOG_VERSION};

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::time::{Duration, Instant};

use ordered_float::OrderedFloat;

use crate::error::{Error, Result};
use crate::evaluate::{Evaluator, Outcome};
use crate::loopmodel::{next_fresh_loop_number, parse_loopnests, loopnests_to_json, LoopNest};
use crate::rewrite::render_config;
use crate::transforms::{derive_children, Configuration, Transformation};

#[derive(Debug, Clone)]
pub struct SearchParams {
    pub tile_sizes: Vec<u64>,
    pub enable_parallel: bool,
    /// Total number of experiments to evaluate, baseline included. On a
    /// resume the already-logged experiments count against it.
    pub max_experiments: Option<u64>,
    /// Wall-clock limit for the whole search, baseline included.
    pub wall_clock_limit: Option<Duration>,
}

impl SearchParams {
    pub fn new(tile_sizes: &[u64], enable_parallel: bool) -> SearchParams {
        SearchParams {
            tile_sizes: normalize_sizes(tile_sizes),
            enable_parallel,
            max_experiments: None,
            wall_clock_limit: None,
        }
    }

    fn normalized(&self) -> SearchParams {
        let mut p = self.clone();
        p.tile_sizes = normalize_sizes(&p.tile_sizes);
        p
    }
}

/// Sizes below 2 do not tile anything; order and duplicates are
/// meaningless. Normalizing here keeps derivation and logs canonical.
fn normalize_sizes(sizes: &[u64]) -> Vec<u64> {
    let mut v: Vec<u64> = sizes.iter().copied().filter(|&s| s >= 2).collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// One evaluated node of the search tree.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub number: u64,
    /// `None` only for the baseline.
    pub parent: Option<u64>,
    /// One configuration per nest of the document.
    pub configs: Vec<Configuration>,
    /// Which nest this experiment extends over its parent; `None` for the
    /// baseline.
    pub added_nest: Option<usize>,
    pub outcome: Outcome,
    /// True once every child has been evaluated.
    pub expanded: bool,
}

impl Experiment {
    /// The transformation this experiment adds to its parent, with the
    /// index of the nest it applies to.
    pub fn added(&self) -> Option<(usize, &Transformation)> {
        let nest = self.added_nest?;
        Some((
            nest,
            self.configs[nest]
                .added()
                .expect("the extended nest has at least one transformation"),
        ))
    }

    /// Rendered pragma lines, one list per nest; what the log stores.
    pub fn pragma_lines(&self) -> Vec<Vec<String>> {
        self.configs.iter().map(render_config).collect()
    }

    pub fn to_record(&self) -> LogRecord {
        LogRecord {
            number: self.number,
            parent: self.parent,
            transformations: self.pragma_lines(),
            status: self.outcome.status_str().to_string(),
            seconds: self.outcome.seconds(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Every reachable configuration was evaluated.
    Exhausted,
    ExperimentBudget,
    WallClock,
}

#[derive(Debug)]
pub struct SearchResult {
    pub baseline_nests: Vec<LoopNest>,
    /// Indexed by experiment number.
    pub experiments: Vec<Experiment>,
    /// Number of the fastest ok experiment.
    pub best: Option<u64>,
    pub stopped: StopReason,
}

impl SearchResult {
    pub fn best_experiment(&self) -> Option<&Experiment> {
        self.best.map(|n| &self.experiments[n as usize])
    }

    pub fn records(&self) -> Vec<LogRecord> {
        self.experiments.iter().map(Experiment::to_record).collect()
    }
}

/// Chooses which frontier node to expand next. The frontier holds
/// `(seconds, number)` keys of ok, not-yet-expanded experiments.
pub trait ExpansionPolicy {
    fn pick(
        &mut self,
        frontier: &BTreeSet<(OrderedFloat<f64>, u64)>,
        experiments: &[Experiment],
    ) -> Option<u64>;
}

/// Expands the fastest unexpanded experiment; ties go to the older one.
pub struct BestFirst;

impl ExpansionPolicy for BestFirst {
    fn pick(
        &mut self,
        frontier: &BTreeSet<(OrderedFloat<f64>, u64)>,
        _experiments: &[Experiment],
    ) -> Option<u64> {
        frontier.iter().next().map(|&(_, number)| number)
    }
}

/// All children of a global configuration, in evaluation order: for each
/// nest in document order, every single-transformation extension of that
/// nest's configuration, the other nests kept as they are. Each entry
/// carries the index of the nest it extends.
pub fn global_children(
    configs: &[Configuration],
    tile_sizes: &[u64],
    enable_parallel: bool,
) -> Vec<(usize, Vec<Configuration>)> {
    let mut out = Vec::new();
    for (index, config) in configs.iter().enumerate() {
        for child in derive_children(config, tile_sizes, enable_parallel) {
            let mut global = configs.to_vec();
            global[index] = child;
            out.push((index, global));
        }
    }
    out
}

/// Runs a fresh search, logging to `log_path` if given. `progress` is
/// called after every evaluation with the experiment and whether it is the
/// new best.
pub fn run(
    evaluator: &mut dyn Evaluator,
    params: &SearchParams,
    log_path: Option<&Path>,
    progress: impl FnMut(&Experiment, bool),
) -> Result<SearchResult> {
    run_with_policy(evaluator, params, log_path, BestFirst, progress)
}

pub fn run_with_policy(
    evaluator: &mut dyn Evaluator,
    params: &SearchParams,
    log_path: Option<&Path>,
    policy: impl ExpansionPolicy,
    mut progress: impl FnMut(&Experiment, bool),
) -> Result<SearchResult> {
    let params = params.normalized();
    check_budget(&params)?;
    let started = Instant::now();

    let (nests, outcome) = evaluator.evaluate_baseline()?;
    let baseline_seconds = match outcome.seconds() {
        Some(s) => s,
        None => {
            return Err(Error::BaselineFailed {
                status: outcome.status_str().to_string(),
                excerpt: outcome.log_excerpt,
            })
        }
    };
    evaluator.calibrate(baseline_seconds);

    let baseline = Experiment {
        number: 0,
        parent: None,
        configs: baseline_configs(&nests),
        added_nest: None,
        outcome,
        expanded: false,
    };

    let log = match log_path {
        Some(path) => {
            let header = LogHeader {
                version: LOG_VERSION,
                tile_sizes: params.tile_sizes.clone(),
                enable_parallel: params.enable_parallel,
                evaluator: evaluator.identity(),
                loopnests: serde_json::from_str(&loopnests_to_json(&nests))
                    .expect("canonical loop nest JSON is valid"),
            };
            Some(LogWriter::create(path, &header)?)
        }
        None => None,
    };

    let mut driver = Driver {
        evaluator,
        params,
        log,
        nests,
        experiments: Vec::new(),
        frontier: BTreeSet::new(),
        best: None,
        started,
        pending: None,
    };
    driver.admit(baseline, &mut progress)?;
    driver.drive(policy, progress)
}

/// Continues a logged search: replays the log into memory without touching
/// the evaluator, then keeps expanding. Refuses logs whose parameters or
/// evaluator differ from the ones requested now.
pub fn resume(
    evaluator: &mut dyn Evaluator,
    params: &SearchParams,
    log_path: &Path,
    progress: impl FnMut(&Experiment, bool),
) -> Result<SearchResult> {
    resume_with_policy(evaluator, params, log_path, BestFirst, progress)
}

pub fn resume_with_policy(
    evaluator: &mut dyn Evaluator,
    params: &SearchParams,
    log_path: &Path,
    policy: impl ExpansionPolicy,
    progress: impl FnMut(&Experiment, bool),
) -> Result<SearchResult> {
    let params = params.normalized();
    check_budget(&params)?;
    let started = Instant::now();

    let contents = read_log(log_path)?;
    check_header(&contents.header, &params, evaluator)?;
    let nests = parse_loopnests(&contents.header.loopnests.to_string())?;
    let experiments = replay(&nests, &contents.records, &params)?;

    let baseline_seconds = match experiments[0].outcome.seconds() {
        Some(s) => s,
        None => {
            return Err(Error::BaselineFailed {
                status: experiments[0].outcome.status_str().to_string(),
                excerpt: String::new(),
            })
        }
    };
    evaluator.calibrate(baseline_seconds);

    // Only the last expansion can be incomplete; every earlier one ran to
    // the end of its batch before the next parent was picked.
    let pending = experiments
        .last()
        .and_then(|e| e.parent)
        .filter(|&p| !experiments[p as usize].expanded);

    let mut driver = Driver {
        evaluator,
        params,
        log: Some(LogWriter::append_to(log_path, contents.valid_len)?),
        nests,
        experiments,
        frontier: BTreeSet::new(),
        best: None,
        started,
        pending,
    };
    driver.rebuild_frontier_and_best();
    driver.drive(policy, progress)
}

fn check_budget(params: &SearchParams) -> Result<()> {
    if params.max_experiments == Some(0) {
        return Err(Error::InvalidRequest(
            "an experiment budget of 0 cannot even evaluate the baseline".into(),
        ));
    }
    Ok(())
}

fn check_header(
    header: &LogHeader,
    params: &SearchParams,
    evaluator: &dyn Evaluator,
) -> Result<()> {
    if header.tile_sizes != params.tile_sizes {
        return Err(Error::ResumeMismatch {
            field: "tile_sizes",
            logged: format!("{:?}", header.tile_sizes),
            requested: format!("{:?}", params.tile_sizes),
        });
    }
    if header.enable_parallel != params.enable_parallel {
        return Err(Error::ResumeMismatch {
            field: "enable_parallel",
            logged: header.enable_parallel.to_string(),
            requested: params.enable_parallel.to_string(),
        });
    }
    let identity = evaluator.identity();
    if header.evaluator != identity {
        return Err(Error::ResumeMismatch {
            field: "evaluator",
            logged: header.evaluator.clone(),
            requested: identity,
        });
    }
    Ok(())
}

/// Baseline configurations share one document-wide fresh id counter, so a
/// machine-generated id can never collide with any id anywhere in the file.
pub fn baseline_configs(nests: &[LoopNest]) -> Vec<Configuration> {
    let counter = next_fresh_loop_number(nests);
    nests
        .iter()
        .enumerate()
        .map(|(i, nest)| Configuration::baseline(i, nest.clone(), counter))
        .collect()
}

/// Rebuilds the experiment list from logged records by rerunning the
/// derivation and attaching the recorded outcomes. Record `n` must be the
/// next underived child of its parent; the rendered pragmas double-check
/// that the derivation still produces what was logged.
fn replay(
    nests: &[LoopNest],
    records: &[LogRecord],
    params: &SearchParams,
) -> Result<Vec<Experiment>> {
    let first = records
        .first()
        .ok_or_else(|| Error::Log("log has no baseline record".into()))?;
    if first.number != 0 || first.parent.is_some() {
        return Err(Error::Log("first log record is not the baseline".into()));
    }
    let baseline = Experiment {
        number: 0,
        parent: None,
        configs: baseline_configs(nests),
        added_nest: None,
        outcome: Outcome::from_status(&first.status, first.seconds)?,
        expanded: false,
    };
    if first.transformations != baseline.pragma_lines() {
        return Err(Error::Log("baseline record does not match the loop nests".into()));
    }

    let mut experiments = vec![baseline];
    let mut derived: HashMap<u64, Vec<(usize, Vec<Configuration>)>> = HashMap::new();
    let mut child_counts: HashMap<u64, usize> = HashMap::new();

    for record in &records[1..] {
        if record.number != experiments.len() as u64 {
            return Err(Error::Log(format!(
                "log record {} out of order (expected {})",
                record.number,
                experiments.len()
            )));
        }
        let parent = record
            .parent
            .ok_or_else(|| Error::Log(format!("record {} has no parent", record.number)))?;
        if parent >= record.number {
            return Err(Error::Log(format!(
                "record {} claims later parent {parent}",
                record.number
            )));
        }
        let siblings = derived.entry(parent).or_insert_with(|| {
            global_children(
                &experiments[parent as usize].configs,
                &params.tile_sizes,
                params.enable_parallel,
            )
        });
        let index = *child_counts.get(&parent).unwrap_or(&0);
        let (added_nest, configs) = siblings.get(index).cloned().ok_or_else(|| {
            Error::Log(format!(
                "record {} is child {index} of experiment {parent}, which only derives {} children",
                record.number,
                siblings.len()
            ))
        })?;
        child_counts.insert(parent, index + 1);

        let experiment = Experiment {
            number: record.number,
            parent: Some(parent),
            configs,
            added_nest: Some(added_nest),
            outcome: Outcome::from_status(&record.status, record.seconds)?,
            expanded: false,
        };
        if experiment.pragma_lines() != record.transformations {
            return Err(Error::Log(format!(
                "record {} does not match the derived transformations; was the log written with a different version?",
                record.number
            )));
        }
        experiments.push(experiment);
    }

    // An experiment whose logged children cover the whole derived batch
    // was fully expanded.
    for (&parent, &count) in &child_counts {
        if count == derived[&parent].len() {
            experiments[parent as usize].expanded = true;
        }
    }
    Ok(experiments)
}

struct Driver<'e> {
    evaluator: &'e mut dyn Evaluator,
    params: SearchParams,
    log: Option<LogWriter>,
    nests: Vec<LoopNest>,
    experiments: Vec<Experiment>,
    frontier: BTreeSet<(OrderedFloat<f64>, u64)>,
    best: Option<u64>,
    started: Instant,
    /// An expansion a resumed log left half done. It finishes before the
    /// policy picks anything new, exactly as it would have uninterrupted,
    /// even if a faster frontier node has appeared in the meantime.
    pending: Option<u64>,
}

impl Driver<'_> {
    fn frontier_key(&self, number: u64) -> (OrderedFloat<f64>, u64) {
        let seconds = self.experiments[number as usize]
            .outcome
            .seconds()
            .expect("only ok experiments enter the frontier");
        (OrderedFloat(seconds), number)
    }

    fn best_seconds(&self) -> Option<f64> {
        self.best
            .and_then(|n| self.experiments[n as usize].outcome.seconds())
    }

    /// Appends a fresh experiment: logs it, updates best, and puts it on
    /// the frontier if it succeeded.
    fn admit(
        &mut self,
        experiment: Experiment,
        progress: &mut impl FnMut(&Experiment, bool),
    ) -> Result<()> {
        if let Some(log) = &mut self.log {
            log.append(&experiment.to_record())?;
        }
        let number = experiment.number;
        let is_new_best = match (experiment.outcome.seconds(), self.best_seconds()) {
            (Some(s), Some(b)) => s < b,
            (Some(_), None) => true,
            (None, _) => false,
        };
        self.experiments.push(experiment);
        if is_new_best {
            self.best = Some(number);
        }
        if self.experiments[number as usize].outcome.is_ok() {
            self.frontier.insert(self.frontier_key(number));
        }
        progress(&self.experiments[number as usize], is_new_best);
        Ok(())
    }

    fn rebuild_frontier_and_best(&mut self) {
        for e in &self.experiments {
            if let Some(seconds) = e.outcome.seconds() {
                if !e.expanded {
                    self.frontier.insert((OrderedFloat(seconds), e.number));
                }
                let better = match self.best_seconds() {
                    Some(b) => seconds < b,
                    None => true,
                };
                if better {
                    self.best = Some(e.number);
                }
            }
        }
    }

    fn children_recorded(&self, parent: u64) -> usize {
        self.experiments
            .iter()
            .filter(|e| e.parent == Some(parent))
            .count()
    }

    fn over_budget(&self) -> Option<StopReason> {
        if let Some(max) = self.params.max_experiments {
            if self.experiments.len() as u64 >= max {
                return Some(StopReason::ExperimentBudget);
            }
        }
        if let Some(limit) = self.params.wall_clock_limit {
            if self.started.elapsed() >= limit {
                return Some(StopReason::WallClock);
            }
        }
        None
    }

    fn drive(
        mut self,
        mut policy: impl ExpansionPolicy,
        mut progress: impl FnMut(&Experiment, bool),
    ) -> Result<SearchResult> {
        let stopped = loop {
            if let Some(reason) = self.over_budget() {
                break reason;
            }
            let picked = self
                .pending
                .take()
                .or_else(|| policy.pick(&self.frontier, &self.experiments));
            let Some(parent) = picked else {
                break StopReason::Exhausted;
            };

            let children = global_children(
                &self.experiments[parent as usize].configs,
                &self.params.tile_sizes,
                self.params.enable_parallel,
            );
            // A resumed or budget-cut expansion picks up behind the
            // children that already have records.
            let skip = self.children_recorded(parent);
            let mut cut_short = None;
            for (added_nest, configs) in children.into_iter().skip(skip) {
                if let Some(reason) = self.over_budget() {
                    cut_short = Some(reason);
                    break;
                }
                let number = self.experiments.len() as u64;
                let outcome = self.evaluator.evaluate(number, &self.nests, &configs)?;
                self.admit(
                    Experiment {
                        number,
                        parent: Some(parent),
                        configs,
                        added_nest: Some(added_nest),
                        outcome,
                        expanded: false,
                    },
                    &mut progress,
                )?;
            }
            if let Some(reason) = cut_short {
                // The parent stays on the frontier with its partial batch;
                // a resume will finish it.
                break reason;
            }
            self.experiments[parent as usize].expanded = true;
            self.frontier.remove(&self.frontier_key(parent));
        };

        Ok(SearchResult {
            baseline_nests: self.nests,
            experiments: self.experiments,
            best: self.best,
            stopped,
        })
    }
}
