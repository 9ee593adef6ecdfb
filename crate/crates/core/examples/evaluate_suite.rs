// Accuracy by category and UI type over a synthetic suite, against the
// locator alone.

use groundscan::agents::OracleConfig;
use groundscan::bench::synth::{generate_suite, SuiteSpec};
use groundscan::bench::{evaluate, evaluate_direct, fingerprint, markdown_table, summarize, Agents};
use groundscan::pipeline::PipelineConfig;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let tasks = generate_suite(&SuiteSpec { tasks: 120, seed: 1, ..SuiteSpec::default() });
    let agents = Agents::Oracle(OracleConfig {
        scanner_score_noise: 30.0,
        scanner_flip_prob: 0.1,
        locator_sigma_rel: 0.012,
        locator_miss_prob: 0.2,
        distractor_score: 85,
        distractor_confusion: 0.3,
        ..OracleConfig::perfect(1)
    });
    let config = PipelineConfig::default();
    let pipeline = summarize("pipeline", &fingerprint(&config, &agents), &evaluate(&tasks, &config, &agents, 0));
    let direct = summarize("locator only", "direct", &evaluate_direct(&tasks, &agents, 0));
    println!("{}", markdown_table(&[direct, pipeline.clone()]));
    println!("{:.1} scanner calls per task", pipeline.scanner_calls_per_task());

    let mut csv = Vec::new();
    pipeline.write_csv(&mut csv)?;
    print!("{}", String::from_utf8(csv)?);
    Ok(())
}

fn main() {
    run_example().unwrap();
}
