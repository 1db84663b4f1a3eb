//! Command line front end.
//!
//! Thin orchestration over the library: `autotune` runs a search, `expand`
//! lists a baseline's children without compiling anything, `export-dot`
//! and `replay` work offline on saved logs.
//!
//! Exit codes: 0 success (budget exhaustion included), 1 usage or bad
//! input, 2 baseline failure, 3 internal error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::evaluate::{
    CompilerEvaluator, CostModel, EvalRequest, Evaluator, SyntheticEvaluator,
};
use crate::loopmodel::parse_loopnests;
use crate::report;
use crate::rewrite::{render_pragma, rewrite_source_multi};
use crate::search::{
    self, baseline_configs, read_log, Experiment, SearchParams, SearchResult, StopReason,
};
use crate::transforms::{derive_children, Transformation};

#[derive(Parser)]
#[command(
    name = "mctree",
    version,
    about = "Autotunes loop transformations by rewriting pragmas into C sources"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search for the fastest transformation sequence.
    Autotune(AutotuneArgs),
    /// List every child of the baseline configuration. No compilation.
    Expand(ExpandArgs),
    /// Render a run log as a Graphviz search tree.
    ExportDot(ExportDotArgs),
    /// Summarize a run log: outcome counts, progress, best configuration.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct AutotuneArgs {
    /// Tile sizes to try, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "4,16,64,256,1024")]
    tile_sizes: Vec<u64>,
    /// Derive no parallelization children.
    #[arg(long)]
    no_parallelize: bool,
    /// Stop after this many experiments, baseline included.
    #[arg(long)]
    max_experiments: Option<u64>,
    /// Stop after this many seconds of wall-clock time.
    #[arg(long, value_name = "SECONDS")]
    wall_clock_budget: Option<f64>,
    /// Kill compiles and runs that exceed this multiple of the baseline time.
    #[arg(long, default_value_t = 10.0)]
    timeout_factor: f64,
    /// Run each executable this many times and keep the minimum.
    #[arg(long, default_value_t = 1)]
    repeats: u32,
    /// Append every experiment to this JSONL log as it finishes.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Continue the search recorded in --log instead of starting over.
    #[arg(long, requires = "log")]
    resume: bool,
    /// Directory for rewritten sources.
    #[arg(long, default_value = ".")]
    output_dir: PathBuf,
    /// Keep every experiment's rewritten source and binary under
    /// rewritten/exp<N>/.
    #[arg(long)]
    keep_files: bool,
    /// Score configurations with this cost model instead of compiling.
    #[arg(long, value_name = "MODEL.json")]
    synthetic: Option<PathBuf>,
    /// Compiler flag that writes the loop nest report.
    #[arg(long, default_value = "-polly-output-loopnest")]
    loopnest_flag: String,
    /// The full compiler command line, after `--`. Must produce a runnable
    /// executable (no -c) and mention the source file exactly once.
    #[arg(last = true, value_name = "COMPILER CMDLINE")]
    cmdline: Vec<String>,
}

#[derive(Args)]
struct ExpandArgs {
    /// Loop nest report to expand (JSON, as the compiler emits it).
    #[arg(long, value_name = "FILE")]
    loopnests: PathBuf,
    /// Tile sizes to try, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "4,16,64,256,1024")]
    tile_sizes: Vec<u64>,
    /// Derive no parallelization children.
    #[arg(long)]
    no_parallelize: bool,
}

#[derive(Args)]
struct ExportDotArgs {
    /// Run log to render.
    #[arg(long)]
    log: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    /// Run log to summarize.
    #[arg(long)]
    log: PathBuf,
    /// Also write the progress table here as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

pub fn main() -> ExitCode {
    // Die quietly when the read end of a pipe goes away, like any other
    // Unix filter; Rust's default turns that into a panic.
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Autotune(args) => autotune(args),
        Command::Expand(args) => expand(args),
        Command::ExportDot(args) => export_dot(args),
        Command::Replay(args) => replay(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::InvalidRequest(_)
        | Error::CostModel(_)
        | Error::ResumeMismatch { .. }
        | Error::Parse { .. }
        | Error::Validation { .. }
        | Error::UnknownLoop { .. }
        | Error::NotApplicable { .. }
        | Error::Log(_) => 1,
        Error::BaselineFailed { .. } | Error::MissingLoopNests { .. } | Error::Spawn { .. } => 2,
        _ => 3,
    }
}

fn autotune(args: AutotuneArgs) -> Result<()> {
    let mut params = SearchParams::new(&args.tile_sizes, !args.no_parallelize);
    params.max_experiments = args.max_experiments;
    if let Some(seconds) = args.wall_clock_budget {
        if !(seconds >= 0.0) {
            return Err(Error::InvalidRequest(
                "--wall-clock-budget must be non-negative".into(),
            ));
        }
        params.wall_clock_limit = Some(Duration::from_secs_f64(seconds));
    }

    match (&args.synthetic, args.cmdline.is_empty()) {
        (Some(_), false) => {
            return Err(Error::InvalidRequest(
                "--synthetic and a compiler command line are mutually exclusive".into(),
            ))
        }
        (None, true) => {
            return Err(Error::InvalidRequest(
                "autotune needs a compiler command line after `--`, or --synthetic".into(),
            ))
        }
        _ => {}
    }
    if args.resume && !args.log.as_deref().is_some_and(Path::exists) {
        return Err(Error::InvalidRequest(
            "--resume needs an existing --log file".into(),
        ));
    }

    let source: Option<PathBuf>;
    let mut evaluator: Box<dyn Evaluator> = match &args.synthetic {
        Some(model_path) => {
            source = None;
            if args.keep_files {
                eprintln!("note: --keep-files has no effect with --synthetic");
            }
            let model = CostModel::from_json(&fs::read_to_string(model_path)?)?;
            Box::new(SyntheticEvaluator::new(model))
        }
        None => {
            let path = detect_source(&args.cmdline)?;
            let request = EvalRequest::new(args.cmdline.clone(), &path)?
                .with_repeats(args.repeats)?;
            let mut ce = CompilerEvaluator::new(request)?
                .with_loopnest_flag(&args.loopnest_flag)
                .with_timeout_factor(args.timeout_factor);
            if args.keep_files {
                let keep = args.output_dir.join("rewritten");
                fs::create_dir_all(&keep)?;
                ce = ce.keep_files_under(keep);
            }
            source = Some(path);
            Box::new(ce)
        }
    };

    let progress = |e: &Experiment, is_new_best: bool| {
        let label = e
            .added()
            .map(|(_, t)| t.to_string())
            .unwrap_or_else(|| "baseline".into());
        let time = match e.outcome.seconds() {
            Some(s) => format!("{s:.4}s"),
            None => "-".into(),
        };
        let marker = if is_new_best { "  << best" } else { "" };
        println!(
            "[{:>4}] {:<14} {:>10}  {label}{marker}",
            e.number,
            e.outcome.status_str(),
            time
        );
    };

    let result = if args.resume {
        let log = args.log.as_deref().expect("clap enforces --log");
        let replayed = read_log(log)?.records.len();
        println!("resuming from {replayed} logged experiments");
        search::resume(evaluator.as_mut(), &params, log, progress)?
    } else {
        search::run(evaluator.as_mut(), &params, args.log.as_deref(), progress)?
    };

    print_summary(&result);
    let best = result.best_experiment().expect("a finished search has a best");
    if best.number != 0 {
        if let Some(source) = &source {
            let path = write_best_source(source, &result, &args.output_dir)?;
            println!("rewrote {}", path.display());
        }
    }
    Ok(())
}

fn print_summary(result: &SearchResult) {
    let stopped = match result.stopped {
        StopReason::Exhausted => "search space exhausted",
        StopReason::ExperimentBudget => "experiment budget reached",
        StopReason::WallClock => "wall-clock budget reached",
    };
    println!();
    println!("stopped: {stopped}");
    let best = result.best_experiment().expect("a finished search has a best");
    let baseline = result.experiments[0]
        .outcome
        .seconds()
        .expect("the baseline succeeded or the search aborted");
    if best.number == 0 {
        println!(
            "no transformation beat the {:.4}s baseline in {} experiments",
            baseline,
            result.experiments.len()
        );
        return;
    }
    let seconds = best.outcome.seconds().expect("the best experiment is ok");
    println!(
        "best: experiment {} at {:.4}s ({:.2}x over the {:.4}s baseline)",
        best.number,
        seconds,
        baseline / seconds,
        baseline
    );
    for nest in best.pragma_lines() {
        for line in nest {
            println!("  {line}");
        }
    }
}

fn write_best_source(
    source: &Path,
    result: &SearchResult,
    output_dir: &Path,
) -> Result<PathBuf> {
    let text = fs::read_to_string(source)?;
    let best = result.best_experiment().expect("caller checked");
    let pairs: Vec<_> = best
        .configs
        .iter()
        .map(|c| (&result.baseline_nests[c.nest_index], c))
        .collect();
    let rewritten = rewrite_source_multi(&text, &pairs)?;
    let dir = output_dir.join("rewritten");
    fs::create_dir_all(&dir)?;
    let name = source
        .file_name()
        .ok_or_else(|| Error::InvalidRequest("source path has no file name".into()))?;
    let path = dir.join(name);
    fs::write(&path, rewritten)?;
    Ok(path)
}

const SOURCE_EXTENSIONS: &[&str] = &["c", "i", "cc", "cp", "cxx", "cpp", "c++", "C"];

/// The one argument of the command line that names a C/C++ source file.
fn detect_source(cmdline: &[String]) -> Result<PathBuf> {
    let mut found = Vec::new();
    for arg in cmdline.iter().skip(1) {
        if arg.starts_with('-') {
            continue;
        }
        if let Some(ext) = Path::new(arg).extension().and_then(|e| e.to_str()) {
            if SOURCE_EXTENSIONS.contains(&ext) {
                found.push(arg.clone());
            }
        }
    }
    match found.len() {
        1 => Ok(PathBuf::from(&found[0])),
        0 => Err(Error::InvalidRequest(
            "no source file in the compiler command line".into(),
        )),
        _ => Err(Error::InvalidRequest(format!(
            "multiple source files in the compiler command line ({}); exactly one is supported",
            found.join(", ")
        ))),
    }
}

fn expand(args: ExpandArgs) -> Result<()> {
    let json = fs::read_to_string(&args.loopnests)?;
    let nests = parse_loopnests(&json)?;
    let params = SearchParams::new(&args.tile_sizes, !args.no_parallelize);
    let configs = baseline_configs(&nests);
    for (index, nest) in nests.iter().enumerate() {
        if index > 0 {
            println!();
        }
        let children = derive_children(&configs[index], &params.tile_sizes, params.enable_parallel);
        let mut tilings = 0;
        let mut interchanges = 0;
        let mut parallelizations = 0;
        for child in &children {
            match child.added() {
                Some(Transformation::Tile { .. }) => tilings += 1,
                Some(Transformation::Interchange { .. }) => interchanges += 1,
                Some(Transformation::ParallelizeThread { .. }) => parallelizations += 1,
                None => unreachable!("children extend the baseline"),
            }
        }
        println!(
            "function {}: {} ({}, {}, {})",
            nest.function,
            count_noun(children.len(), "child", "children"),
            count_noun(tilings, "tiling", "tilings"),
            count_noun(interchanges, "interchange", "interchanges"),
            count_noun(parallelizations, "parallelization", "parallelizations"),
        );
        for child in &children {
            println!(
                "{}",
                render_pragma(child.added().expect("children extend the baseline"))
            );
        }
    }
    Ok(())
}

fn count_noun(n: usize, singular: &str, plural: &str) -> String {
    if n == 1 {
        format!("{n} {singular}")
    } else {
        format!("{n} {plural}")
    }
}

fn export_dot(args: ExportDotArgs) -> Result<()> {
    let contents = read_log(&args.log)?;
    let dot = report::export_dot(&contents.records);
    match &args.out {
        Some(path) => {
            fs::write(path, dot)?;
            println!("wrote {}", path.display());
        }
        None => print!("{dot}"),
    }
    Ok(())
}

fn replay(args: ReplayArgs) -> Result<()> {
    let contents = read_log(&args.log)?;
    let records = &contents.records;
    println!(
        "log {}: {}",
        args.log.display(),
        count_noun(records.len(), "experiment", "experiments")
    );
    println!(
        "  tile sizes {:?}, parallelization {}",
        contents.header.tile_sizes,
        if contents.header.enable_parallel { "on" } else { "off" }
    );
    let count = |status: &str| records.iter().filter(|r| r.status == status).count();
    println!(
        "  {} ok, {} compile-failed, {} run-failed, {} timeout",
        count("ok"),
        count("compile-failed"),
        count("run-failed"),
        count("timeout")
    );

    println!("progress:");
    let mut best: Option<&search::LogRecord> = None;
    for record in records {
        let improved = match (record.seconds, best.and_then(|b| b.seconds)) {
            (Some(s), Some(b)) => s < b,
            (Some(_), None) => true,
            (None, _) => false,
        };
        if improved {
            best = Some(record);
            println!(
                "  exp {:>4}: {:.4}s",
                record.number,
                record.seconds.expect("improved records have seconds")
            );
        }
    }
    match best {
        Some(record) if record.number != 0 => {
            println!(
                "best: experiment {} at {:.4}s",
                record.number,
                record.seconds.expect("ok records have seconds")
            );
            for nest in &record.transformations {
                for line in nest {
                    println!("  {line}");
                }
            }
        }
        Some(record) => {
            println!(
                "best: the baseline at {:.4}s",
                record.seconds.expect("ok records have seconds")
            );
        }
        None => println!("best: none (no successful experiment)"),
    }

    if let Some(path) = &args.csv {
        fs::write(path, report::export_progress_csv(records))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
