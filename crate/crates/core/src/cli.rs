//! The `groundscan` command line.
//!
//! Exit codes: 0 on success, 1 when the evaluation finished but some tasks
//! failed or manifest entries were skipped, 2 on configuration errors, 130
//! when interrupted. An interrupted run still writes reports for the tasks
//! that finished.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Once};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::agents::{RemoteLocator, RemoteScanner};
use crate::bench::{
    self, filter_subsets, load_dataset, markdown_table, synth, Agents, EvalReport, GroundingTask, SweepAxis,
    TaskOutcome,
};
use crate::config::Config;
use crate::geometry::PointPx;
use crate::pipeline::{write_jsonl, Ablation, CallCounts, FallbackLevel};

#[derive(Debug, Parser)]
#[command(
    name = "groundscan",
    version,
    about = "Coarse-to-fine GUI grounding with a scanner and a locator agent"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the pipeline over a dataset (or a synthetic suite) and report accuracy
    Run(RunArgs),
    /// Sweep top-k or the stop threshold and report accuracy and scanner calls
    Sweep(SweepArgs),
    /// Run the component ablations
    Ablate(AblateArgs),
    /// Run oracle agents over a seeded synthetic suite
    Simulate(RunArgs),
    /// Render report CSV files as one markdown table
    Report(ReportArgs),
    /// Draw search overlays for selected tasks
    Viz(VizArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Oracle,
    Live,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML config with [pipeline], [scanner_backend], [locator_backend] and [oracle] sections
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// JSON-lines task manifest; a synthetic suite is used when omitted
    #[arg(long, value_name = "PATH")]
    pub dataset: Option<PathBuf>,
    /// Directory that manifest image paths are relative to [default: the manifest's directory]
    #[arg(long, value_name = "DIR")]
    pub images: Option<PathBuf>,
    /// Output directory; nothing is written outside it
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Agent backends
    #[arg(long, value_enum, default_value_t = Mode::Oracle)]
    pub mode: Mode,
    /// Seed for oracle agents and the synthetic suite [default: oracle.seed from config]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Regions kept per level
    #[arg(long, value_name = "K")]
    pub top_k: Option<usize>,
    /// Stop subdividing once a region's width or height is below this many pixels
    #[arg(long, value_name = "PX")]
    pub threshold: Option<u32>,
    /// Worker threads; 0 uses one per core
    #[arg(long, value_name = "N", default_value_t = 0)]
    pub parallelism: usize,
    /// Only run these subsets (comma-separated or repeated)
    #[arg(long, value_delimiter = ',', value_name = "ID")]
    pub subset: Vec<String>,
    /// Synthetic suite size when no dataset is given
    #[arg(long, value_name = "N", default_value_t = 200)]
    pub tasks: usize,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Component to disable: full, no_verify, no_consensus or no_enhance
    #[arg(long, default_value = "full")]
    pub ablation: Ablation,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Parameter to sweep: top_k or threshold
    #[arg(long)]
    pub axis: SweepAxis,
    /// Comma-separated values, e.g. 3,5,7,9
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<u32>,
}

#[derive(Debug, Clone, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Variants to run (comma-separated) [default: all four]
    #[arg(long, value_delimiter = ',')]
    pub ablation: Vec<Ablation>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Report CSV files written by run, simulate or ablate
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Output directory for report.md
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct VizArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Task ids to draw (comma-separated) [default: the first five]
    #[arg(long = "task", value_delimiter = ',', value_name = "ID")]
    pub task_ids: Vec<String>,
    /// Component to disable: full, no_verify, no_consensus or no_enhance
    #[arg(long, default_value = "full")]
    pub ablation: Ablation,
}

/// Failure classes, mapped to exit codes by [`main_with_args`].
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<bench::ReportError> for CliError {
    fn from(e: bench::ReportError) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Set by Ctrl-C. Tasks not yet started are skipped once it is set.
static INTERRUPTED: AtomicBool = AtomicBool::new(false);

fn interrupted() -> bool {
    INTERRUPTED.load(Ordering::Relaxed)
}

/// What a subcommand produced: its stdout text and whether any task failed.
struct Done {
    stdout: String,
    task_failures: usize,
}

struct Setup {
    config: Config,
    agents: Agents,
    tasks: Vec<GroundingTask>,
    skipped: Vec<bench::SkippedEntry>,
}

fn setup(c: &CommonArgs, force_oracle: bool) -> Result<Setup, CliError> {
    let mut config = match &c.config {
        Some(p) => Config::load(p).map_err(|e| CliError::Config(e.to_string()))?,
        None => Config::default(),
    };
    if let Some(seed) = c.seed {
        config.oracle.seed = seed;
    }
    if let Some(k) = c.top_k {
        config.pipeline.top_k = k;
    }
    if let Some(t) = c.threshold {
        config.pipeline.stop_threshold_px = t;
    }
    config.validate().map_err(|e| CliError::Config(e.to_string()))?;
    if force_oracle && c.mode == Mode::Live {
        return Err(CliError::Config("simulate runs oracle agents only; drop --mode live".into()));
    }
    let agents = match c.mode {
        Mode::Oracle => Agents::Oracle(config.oracle.clone()),
        Mode::Live => {
            let scanner = RemoteScanner::new(config.scanner_backend.clone()).map_err(|e| CliError::Config(format!("scanner backend: {e}")))?;
            let locator = RemoteLocator::new(config.locator_backend.clone()).map_err(|e| CliError::Config(format!("locator backend: {e}")))?;
            Agents::Live {
                scanner: Arc::new(scanner),
                locator: Arc::new(locator),
                description: format!("{}+{}", config.scanner_backend.model, config.locator_backend.model),
            }
        }
    };
    let (tasks, skipped) = match (&c.dataset, force_oracle) {
        (Some(manifest), false) => {
            let root = c
                .images
                .clone()
                .or_else(|| manifest.parent().map(Path::to_path_buf))
                .unwrap_or_default();
            let ds = load_dataset(&root, manifest).map_err(|e| CliError::Config(e.to_string()))?;
            (ds.tasks, ds.skipped)
        }
        _ => {
            let spec = synth::SuiteSpec {
                tasks: c.tasks,
                seed: config.oracle.seed,
                ..synth::SuiteSpec::default()
            };
            (synth::generate_suite(&spec), Vec::new())
        }
    };
    let tasks = filter_subsets(tasks, &c.subset);
    Ok(Setup {
        config,
        agents,
        tasks,
        skipped,
    })
}

fn safe_name(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

#[derive(Serialize)]
struct ResultLine<'a> {
    task_id: &'a str,
    hit: bool,
    point: Option<PointPx>,
    fallback_level: Option<FallbackLevel>,
    call_counts: Option<CallCounts>,
    error: Option<&'a str>,
}

fn write_jsonl_file<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), CliError> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut f, &r).map_err(|e| CliError::Io(e.to_string()))?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

fn write_outcomes(out: &Path, outcomes: &[TaskOutcome]) -> Result<(), CliError> {
    write_jsonl_file(
        &out.join("results.jsonl"),
        outcomes.iter().map(|o| ResultLine {
            task_id: &o.task_id,
            hit: o.hit,
            point: o.point,
            fallback_level: o.result.as_ref().map(|r| r.fallback_level),
            call_counts: o.result.as_ref().map(|r| r.call_counts),
            error: o.error.as_deref(),
        }),
    )?;
    let traces = out.join("traces");
    fs::create_dir_all(&traces)?;
    for o in outcomes {
        if let Some(r) = &o.result {
            let f = fs::File::create(traces.join(format!("{}.jsonl", safe_name(&o.task_id))))?;
            write_jsonl(std::io::BufWriter::new(f), &r.trace)?;
        }
    }
    Ok(())
}

fn write_report(out: &Path, stem: &str, report: &EvalReport) -> Result<(), CliError> {
    let mut f = fs::File::create(out.join(format!("{stem}.csv")))?;
    report.write_csv(&mut f)?;
    Ok(())
}

fn prepare_out(out: &Path, s: &Setup) -> Result<(), CliError> {
    fs::create_dir_all(out)?;
    fs::write(out.join("config.toml"), s.config.to_toml())?;
    if !s.skipped.is_empty() {
        write_jsonl_file(&out.join("skipped.jsonl"), &s.skipped)?;
    }
    Ok(())
}

fn failures(outcomes: &[TaskOutcome]) -> usize {
    outcomes.iter().filter(|o| o.error.is_some()).count()
}

fn cmd_run(args: &RunArgs, simulate: bool) -> Result<Done, CliError> {
    let c = &args.common;
    let s = setup(c, simulate)?;
    prepare_out(&c.out, &s)?;
    let config = s.config.pipeline.clone().with_ablation(args.ablation);
    let outcomes = bench::evaluate_until(&s.tasks, &config, &s.agents, c.parallelism, &INTERRUPTED);
    if interrupted() {
        eprintln!("groundscan: interrupted after {} of {} tasks", outcomes.len(), s.tasks.len());
    }
    let report = bench::summarize(args.ablation.name(), &bench::fingerprint(&config, &s.agents), &outcomes);
    write_outcomes(&c.out, &outcomes)?;
    write_report(&c.out, "report", &report)?;
    let table = markdown_table(&[report]);
    fs::write(c.out.join("report.md"), &table)?;
    Ok(Done {
        stdout: table,
        task_failures: failures(&outcomes) + s.skipped.len(),
    })
}

fn cmd_ablate(args: &AblateArgs) -> Result<Done, CliError> {
    let c = &args.common;
    let s = setup(c, false)?;
    prepare_out(&c.out, &s)?;
    let variants = if args.ablation.is_empty() {
        Ablation::ALL.to_vec()
    } else {
        args.ablation.clone()
    };
    let mut reports = Vec::new();
    let mut task_failures = s.skipped.len();
    for a in variants {
        let config = s.config.pipeline.clone().with_ablation(a);
        let outcomes = bench::evaluate_until(&s.tasks, &config, &s.agents, c.parallelism, &INTERRUPTED);
        task_failures += failures(&outcomes);
        let report = bench::summarize(a.name(), &bench::fingerprint(&config, &s.agents), &outcomes);
        write_report(&c.out, &format!("ablation_{}", a.name()), &report)?;
        reports.push(report);
        if interrupted() {
            eprintln!("groundscan: interrupted during {} after {} of {} tasks", a.name(), outcomes.len(), s.tasks.len());
            break;
        }
    }
    let table = markdown_table(&reports);
    fs::write(c.out.join("ablation.md"), &table)?;
    Ok(Done {
        stdout: table,
        task_failures,
    })
}

fn cmd_sweep(args: &SweepArgs) -> Result<Done, CliError> {
    let c = &args.common;
    let s = setup(c, false)?;
    prepare_out(&c.out, &s)?;
    let rows = bench::run_sweep_until(
        &s.tasks,
        &s.config.pipeline,
        &s.agents,
        args.axis,
        &args.values,
        c.parallelism,
        &INTERRUPTED,
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    if interrupted() {
        eprintln!("groundscan: interrupted; {} of {} sweep values finished", rows.len(), args.values.len());
    }
    let table = bench::sweep_markdown(&rows);
    fs::write(c.out.join("sweep.md"), &table)?;
    bench::write_sweep_csv(&rows, fs::File::create(c.out.join("sweep.csv"))?)?;
    Ok(Done {
        stdout: table,
        task_failures: s.skipped.len() + rows.iter().map(|r| r.report.failures as usize).sum::<usize>(),
    })
}

fn cmd_report(args: &ReportArgs) -> Result<Done, CliError> {
    let mut reports = Vec::new();
    for p in &args.inputs {
        let f = fs::File::open(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
        reports.push(EvalReport::read_csv(f).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?);
    }
    fs::create_dir_all(&args.out)?;
    let table = markdown_table(&reports);
    fs::write(args.out.join("report.md"), &table)?;
    Ok(Done {
        stdout: table,
        task_failures: 0,
    })
}

fn cmd_viz(args: &VizArgs) -> Result<Done, CliError> {
    let c = &args.common;
    let s = setup(c, false)?;
    prepare_out(&c.out, &s)?;
    let chosen: Vec<&GroundingTask> = if args.task_ids.is_empty() {
        s.tasks.iter().take(5).collect()
    } else {
        let picked: Vec<_> = s.tasks.iter().filter(|t| args.task_ids.contains(&t.id)).collect();
        if picked.len() != args.task_ids.len() {
            return Err(CliError::Config("some --task ids are not in the dataset".into()));
        }
        picked
    };
    let config = s.config.pipeline.clone().with_ablation(args.ablation);
    let mut stdout = String::new();
    let mut task_failures = 0;
    for task in chosen {
        let outcome = bench::run_task(task, &config, &s.agents);
        let Some(result) = &outcome.result else {
            task_failures += 1;
            stdout += &format!("{}: {}\n", task.id, outcome.error.unwrap_or_default());
            continue;
        };
        let (screen, _) = bench::open_screen(task).map_err(CliError::Io)?;
        let path = c.out.join(format!("{}.png", safe_name(&task.id)));
        bench::save_overlay(&path, screen.as_ref(), task, result).map_err(|e| CliError::Io(e.to_string()))?;
        stdout += &format!(
            "{} {} {}\n",
            path.display(),
            if outcome.hit { "hit" } else { "miss" },
            serde_json::to_string(&result.final_point).unwrap_or_default()
        );
    }
    Ok(Done { stdout, task_failures })
}

/// Parses `args` (including the program name) and runs the subcommand.
/// Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    static HANDLER: Once = Once::new();
    HANDLER.call_once(|| {
        // Failing to install (e.g. a handler already exists) only loses
        // the partial flush.
        let _ = ctrlc::set_handler(|| INTERRUPTED.store(true, Ordering::Relaxed));
    });
    let done = match &cli.command {
        Command::Run(a) => cmd_run(a, false),
        Command::Simulate(a) => cmd_run(a, true),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Report(a) => cmd_report(a),
        Command::Viz(a) => cmd_viz(a),
    };
    match done {
        Ok(d) => {
            print!("{}", d.stdout);
            if interrupted() {
                130
            } else if d.task_failures > 0 {
                eprintln!("groundscan: {} task(s) failed or were skipped", d.task_failures);
                1
            } else {
                0
            }
        }
        Err(CliError::Config(m)) => {
            eprintln!("groundscan: configuration error: {m}");
            2
        }
        Err(CliError::Io(m)) => {
            eprintln!("groundscan: {m}");
            1
        }
    }
}
