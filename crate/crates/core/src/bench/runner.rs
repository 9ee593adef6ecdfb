use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::report::{hit, EvalReport, ReportError};
use super::task::{check_bbox, Category, GroundingTask, ImageSource, UiType};
use crate::agents::{AgentImage, LocatorAgent, OracleConfig, OracleLocator, OracleScanner, ScannerAgent, Screen};
use crate::geometry::{BoxClosed, PointPx};
use crate::pipeline::{self, Ablation, ConfigError, GroundingResult, PipelineConfig};

/// Which agents answer the pipeline's questions.
#[derive(Clone)]
pub enum Agents {
    /// Ground-truth-aware simulators, built per task.
    Oracle(OracleConfig),
    /// Shared real backends.
    Live {
        scanner: Arc<dyn ScannerAgent>,
        locator: Arc<dyn LocatorAgent>,
        /// Recorded in the report fingerprint.
        description: String,
    },
}

impl Agents {
    fn describe(&self) -> String {
        match self {
            Agents::Oracle(c) => format!("oracle:{}", serde_json::to_string(c).unwrap_or_default()),
            Agents::Live { description, .. } => format!("live:{description}"),
        }
    }

    fn with_task<R>(
        &self,
        task: &GroundingTask,
        distractors: Vec<BoxClosed>,
        f: impl FnOnce(&dyn ScannerAgent, &dyn LocatorAgent) -> R,
    ) -> R {
        match self {
            Agents::Oracle(cfg) => {
                let truth = crate::agents::OracleTruth {
                    task_key: task.id.clone(),
                    target: task.gt_bbox,
                    distractors,
                };
                let scanner = OracleScanner::new(cfg.clone(), truth.clone());
                let locator = OracleLocator::new(cfg.clone(), truth);
                f(&scanner, &locator)
            }
            Agents::Live { scanner, locator, .. } => f(scanner.as_ref(), locator.as_ref()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub task_id: String,
    pub category: Category,
    pub ui_type: UiType,
    pub hit: bool,
    pub point: Option<PointPx>,
    pub result: Option<GroundingResult>,
    /// Set when the task could not run at all.
    pub error: Option<String>,
}

/// Opens a task's screen. Synthetic scenes also report their distractors.
pub fn open_screen(task: &GroundingTask) -> Result<(Box<dyn Screen>, Vec<BoxClosed>), String> {
    let (screen, distractors): (Box<dyn Screen>, _) = match &task.image {
        ImageSource::Synthetic(scene) => (Box::new(scene.clone()), scene.distractors.clone()),
        ImageSource::File(path) => {
            let img = image::open(path).map_err(|e| format!("unreadable image {}: {e}", path.display()))?;
            (Box::new(img.to_rgb8()), Vec::new())
        }
    };
    check_bbox(task, screen.size())?;
    Ok((screen, distractors))
}

fn outcome(task: &GroundingTask, point: Result<PointPx, String>, result: Option<GroundingResult>) -> TaskOutcome {
    let (point, error) = match point {
        Ok(p) => (Some(p), None),
        Err(e) => (None, Some(e)),
    };
    TaskOutcome {
        task_id: task.id.clone(),
        category: task.category,
        ui_type: task.ui_type,
        hit: point.is_some_and(|p| hit(p, &task.gt_bbox) == 1),
        point,
        result,
        error,
    }
}

pub fn run_task(task: &GroundingTask, config: &PipelineConfig, agents: &Agents) -> TaskOutcome {
    let (screen, distractors) = match open_screen(task) {
        Ok(s) => s,
        Err(e) => return outcome(task, Err(e), None),
    };
    let result = agents.with_task(task, distractors, |scanner, locator| {
        pipeline::run(screen.as_ref(), &task.context(), config, scanner, locator)
    });
    outcome(task, Ok(result.final_point), Some(result))
}

/// The locator alone on the full screenshot, as a baseline.
pub fn run_task_direct(task: &GroundingTask, agents: &Agents) -> TaskOutcome {
    let (screen, distractors) = match open_screen(task) {
        Ok(s) => s,
        Err(e) => return outcome(task, Err(e), None),
    };
    let point = agents.with_task(task, distractors, |_, locator| {
        let full = AgentImage::full(screen.as_ref());
        locator
            .ground(&task.instruction, &full)
            .map(|p| full.size().rect().clamp_point(p))
            .map_err(|e| e.to_string())
    });
    outcome(task, point, None)
}

fn in_pool<T: Send>(parallelism: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(parallelism).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Runs every task; output order matches input order regardless of
/// `parallelism` (0 means one thread per core).
pub fn evaluate(tasks: &[GroundingTask], config: &PipelineConfig, agents: &Agents, parallelism: usize) -> Vec<TaskOutcome> {
    evaluate_until(tasks, config, agents, parallelism, &AtomicBool::new(false))
}

/// Like [`evaluate`], but tasks not yet started when `stop` is set are
/// dropped. The rest keep input order.
pub fn evaluate_until(
    tasks: &[GroundingTask],
    config: &PipelineConfig,
    agents: &Agents,
    parallelism: usize,
    stop: &AtomicBool,
) -> Vec<TaskOutcome> {
    in_pool(parallelism, || {
        tasks
            .par_iter()
            .filter_map(|t| (!stop.load(Ordering::Relaxed)).then(|| run_task(t, config, agents)))
            .collect()
    })
}

pub fn evaluate_direct(tasks: &[GroundingTask], agents: &Agents, parallelism: usize) -> Vec<TaskOutcome> {
    in_pool(parallelism, || tasks.par_iter().map(|t| run_task_direct(t, agents)).collect())
}

pub fn fingerprint(config: &PipelineConfig, agents: &Agents) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(config).unwrap_or_default());
    h.update(agents.describe().as_bytes());
    let digest = h.finalize();
    let hex: String = digest[..4].iter().map(|b| format!("{b:02x}")).collect();
    let variant = config.ablation().map_or("custom", Ablation::name);
    format!(
        "{variant} k={} t={} crop={} up={} {hex}",
        config.top_k, config.stop_threshold_px, config.crop_side_px, config.upscale_factor
    )
}

pub fn summarize(label: &str, fingerprint: &str, outcomes: &[TaskOutcome]) -> EvalReport {
    let mut r = EvalReport::empty(label, fingerprint);
    for o in outcomes {
        r.record(o.category, o.ui_type, o.hit);
        if o.error.is_some() {
            r.failures += 1;
        }
        if let Some(res) = &o.result {
            r.scanner_calls += res.call_counts.scanner as u64;
            r.locator_calls += res.call_counts.locator as u64;
        } else if o.point.is_some() {
            r.locator_calls += 1;
        }
    }
    r
}

/// Scores results against tasks pairwise.
pub fn accuracy(results: &[GroundingResult], tasks: &[GroundingTask], label: &str) -> Result<EvalReport, ReportError> {
    if results.len() != tasks.len() {
        return Err(ReportError::LengthMismatch {
            results: results.len(),
            tasks: tasks.len(),
        });
    }
    let mut r = EvalReport::empty(label, "");
    for (res, t) in results.iter().zip(tasks) {
        r.record(t.category, t.ui_type, hit(res.final_point, &t.gt_bbox) == 1);
        r.scanner_calls += res.call_counts.scanner as u64;
        r.locator_calls += res.call_counts.locator as u64;
    }
    Ok(r)
}

pub fn run_ablation(
    tasks: &[GroundingTask],
    config: &PipelineConfig,
    agents: &Agents,
    ablation: Ablation,
    parallelism: usize,
) -> EvalReport {
    let config = config.clone().with_ablation(ablation);
    let outcomes = evaluate(tasks, &config, agents, parallelism);
    summarize(ablation.name(), &fingerprint(&config, agents), &outcomes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    TopK,
    Threshold,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::TopK => "top_k",
            SweepAxis::Threshold => "threshold",
        }
    }

    pub fn apply(self, config: &PipelineConfig, value: u32) -> PipelineConfig {
        let mut c = config.clone();
        match self {
            SweepAxis::TopK => c.top_k = value as usize,
            SweepAxis::Threshold => c.stop_threshold_px = value,
        }
        c
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "top_k" | "k" => Ok(SweepAxis::TopK),
            "threshold" | "stop_threshold_px" => Ok(SweepAxis::Threshold),
            _ => Err(format!("unknown sweep axis {s:?} (top_k, threshold)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: u32,
    pub report: EvalReport,
}

/// One report per axis value. Every setting is validated before any runs.
pub fn run_sweep(
    tasks: &[GroundingTask],
    config: &PipelineConfig,
    agents: &Agents,
    axis: SweepAxis,
    values: &[u32],
    parallelism: usize,
) -> Result<Vec<SweepRow>, ConfigError> {
    run_sweep_until(tasks, config, agents, axis, values, parallelism, &AtomicBool::new(false))
}

/// Like [`run_sweep`], but stops at the first value whose evaluation `stop`
/// interrupts. Only fully evaluated rows are returned.
pub fn run_sweep_until(
    tasks: &[GroundingTask],
    config: &PipelineConfig,
    agents: &Agents,
    axis: SweepAxis,
    values: &[u32],
    parallelism: usize,
    stop: &AtomicBool,
) -> Result<Vec<SweepRow>, ConfigError> {
    let configs: Vec<PipelineConfig> = values.iter().map(|&v| axis.apply(config, v)).collect();
    for c in &configs {
        c.validate()?;
    }
    let mut rows = Vec::with_capacity(values.len());
    for (&value, c) in values.iter().zip(configs) {
        let outcomes = evaluate_until(tasks, &c, agents, parallelism, stop);
        if stop.load(Ordering::Relaxed) {
            break;
        }
        rows.push(SweepRow {
            axis,
            value,
            report: summarize(&format!("{axis}={value}"), &fingerprint(&c, agents), &outcomes),
        });
    }
    Ok(rows)
}

pub fn sweep_markdown(rows: &[SweepRow]) -> String {
    let axis = rows.first().map_or("value", |r| r.axis.name());
    let mut out = format!("| {axis} | Accuracy | Text | Icon | Scanner calls | Scanner calls / task |\n|---:|---:|---:|---:|---:|---:|\n");
    for r in rows {
        out += &format!(
            "| {} | {:.2} | {:.2} | {:.2} | {} | {:.1} |\n",
            r.value,
            100.0 * r.report.accuracy(),
            100.0 * r.report.ui_type_accuracy(UiType::Text),
            100.0 * r.report.ui_type_accuracy(UiType::Icon),
            r.report.scanner_calls,
            r.report.scanner_calls_per_task()
        );
    }
    out
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["axis", "value", "accuracy", "hits", "n", "scanner_calls", "locator_calls"])?;
    for r in rows {
        w.write_record([
            r.axis.name().to_string(),
            r.value.to_string(),
            format!("{:.6}", r.report.accuracy()),
            r.report.hits().to_string(),
            r.report.n().to_string(),
            r.report.scanner_calls.to_string(),
            r.report.locator_calls.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::synth::{generate_suite, SuiteSpec};

    fn suite(n: usize) -> Vec<GroundingTask> {
        generate_suite(&SuiteSpec {
            tasks: n,
            seed: 11,
            ..SuiteSpec::default()
        })
    }

    #[test]
    fn perfect_oracles_hit_everything() {
        let tasks = suite(24);
        let agents = Agents::Oracle(OracleConfig::perfect(1));
        let out = evaluate(&tasks, &PipelineConfig::default(), &agents, 2);
        assert!(out.iter().all(|o| o.hit), "{:?}", out.iter().find(|o| !o.hit));
        let r = summarize("full", "fp", &out);
        assert_eq!(r.accuracy(), 1.0);
    }

    #[test]
    fn parallelism_does_not_change_results() {
        let tasks = suite(12);
        let agents = Agents::Oracle(OracleConfig {
            scanner_score_noise: 30.0,
            scanner_flip_prob: 0.2,
            locator_sigma: 20.0,
            locator_miss_prob: 0.3,
            ..OracleConfig::perfect(5)
        });
        let cfg = PipelineConfig::default();
        assert_eq!(evaluate(&tasks, &cfg, &agents, 1), evaluate(&tasks, &cfg, &agents, 4));
    }

    #[test]
    fn a_raised_stop_flag_skips_unstarted_tasks() {
        let tasks = suite(6);
        let agents = Agents::Oracle(OracleConfig::perfect(1));
        let stop = AtomicBool::new(true);
        assert!(evaluate_until(&tasks, &PipelineConfig::default(), &agents, 2, &stop).is_empty());
    }

    #[test]
    fn accuracy_checks_lengths() {
        assert!(matches!(
            accuracy(&[], &suite(1), "x"),
            Err(ReportError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn missing_image_is_a_failure_not_a_crash() {
        let mut t = suite(1).remove(0);
        t.image = ImageSource::File("/nonexistent/shot.png".into());
        let o = run_task(&t, &PipelineConfig::default(), &Agents::Oracle(OracleConfig::perfect(0)));
        assert!(!o.hit);
        assert!(o.error.unwrap().contains("unreadable image"));
    }

    #[test]
    fn fingerprint_names_the_ablation() {
        let agents = Agents::Oracle(OracleConfig::perfect(0));
        let cfg = PipelineConfig::default().with_ablation(Ablation::NoVerify);
        assert!(fingerprint(&cfg, &agents).starts_with("no_verify "));
    }

    #[test]
    fn huge_threshold_gives_single_level_search() {
        let tasks = suite(6);
        let cfg = PipelineConfig {
            stop_threshold_px: 10_000,
            ..PipelineConfig::default()
        };
        for o in evaluate(&tasks, &cfg, &Agents::Oracle(OracleConfig::perfect(0)), 1) {
            let r = o.result.unwrap();
            assert!(r.explored.iter().all(|n| n.depth == 1));
            // One selection plus one verification per stage-1 region.
            assert!(r.call_counts.scanner >= 4);
        }
    }
}
