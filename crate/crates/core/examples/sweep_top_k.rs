// Spending more scanner calls: wider beams and a lower stop threshold.

use groundscan::agents::OracleConfig;
use groundscan::bench::synth::{generate_suite, SuiteSpec};
use groundscan::bench::{run_sweep, sweep_markdown, Agents, SweepAxis};
use groundscan::pipeline::PipelineConfig;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let tasks = generate_suite(&SuiteSpec { tasks: 100, seed: 3, ..SuiteSpec::default() });
    let agents = Agents::Oracle(OracleConfig {
        scanner_score_noise: 50.0,
        locator_sigma_rel: 0.012,
        locator_miss_prob: 0.2,
        distractor_score: 85,
        ..OracleConfig::perfect(3)
    });
    let config = PipelineConfig::default();
    let rows = run_sweep(&tasks, &config, &agents, SweepAxis::TopK, &[3, 5, 7, 9], 0)?;
    println!("{}", sweep_markdown(&rows));
    let rows = run_sweep(&tasks, &config, &agents, SweepAxis::Threshold, &[1024, 768, 512, 448], 0)?;
    println!("{}", sweep_markdown(&rows));
    Ok(())
}

fn main() {
    run_example().unwrap();
}
