// Turning off verification, consensus or resolution enhancement.

use groundscan::agents::OracleConfig;
use groundscan::bench::synth::{generate_suite, SuiteSpec};
use groundscan::bench::{markdown_table, run_ablation, Agents};
use groundscan::pipeline::{Ablation, PipelineConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let tasks = generate_suite(&SuiteSpec { tasks: 100, seed: 2, ..SuiteSpec::default() });
    let agents = Agents::Oracle(OracleConfig {
        scanner_score_noise: 30.0,
        scanner_flip_prob: 0.1,
        locator_sigma_rel: 0.012,
        locator_miss_prob: 0.2,
        distractor_score: 85,
        distractor_confusion: 0.3,
        ..OracleConfig::perfect(2)
    });
    let reports: Vec<_> = Ablation::ALL
        .into_iter()
        .map(|a| run_ablation(&tasks, &PipelineConfig::default(), &agents, a, 0))
        .collect();
    println!("{}", markdown_table(&reports));
    Ok(())
}

fn main() {
    run_example().unwrap();
}
