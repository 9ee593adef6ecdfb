//! Benchmark harness: dataset loading, the hit metric, per-category
//! reports, batch/ablation/sweep runners, a synthetic task generator and
//! overlay images.

mod overlay;
mod report;
mod runner;
pub mod synth;
mod task;

pub use overlay::{draw_overlay, point_color, save_overlay};
pub use report::{hit, markdown_table, Cell, EvalReport, ReportError};
pub use runner::{
    accuracy, evaluate, evaluate_direct, evaluate_until, fingerprint, open_screen, run_ablation, run_sweep, run_sweep_until, run_task,
    run_task_direct, summarize, sweep_markdown, write_sweep_csv, Agents, SweepAxis, SweepRow, TaskOutcome,
};
pub use task::{
    check_bbox, filter_subsets, load_dataset, parse_manifest, Category, Dataset, DatasetError, GroundingTask,
    ImageSource, SkippedEntry, UiType,
};
