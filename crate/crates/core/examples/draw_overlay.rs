// Saves a PNG showing the explored regions, candidate crops, the target box
// and the final click.

use groundscan::agents::OracleConfig;
use groundscan::bench::synth::{generate_suite, SuiteSpec};
use groundscan::bench::{open_screen, run_task, save_overlay, Agents};
use groundscan::pipeline::PipelineConfig;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let task = generate_suite(&SuiteSpec {
        tasks: 1,
        seed: 5,
        resolutions: vec![groundscan::geometry::ImageSize::new(1920, 1080)?],
        ..SuiteSpec::default()
    })
    .remove(0);
    let agents = Agents::Oracle(OracleConfig { scanner_score_noise: 25.0, ..OracleConfig::perfect(5) });
    let outcome = run_task(&task, &PipelineConfig::default(), &agents);
    let result = outcome.result.ok_or("task did not run")?;
    let (screen, _) = open_screen(&task)?;
    let path = std::env::temp_dir().join(format!("{}.png", task.id));
    save_overlay(&path, screen.as_ref(), &task, &result)?;
    println!("hit={} overlay at {}", outcome.hit, path.display());
    Ok(())
}

fn main() {
    run_example().unwrap();
}
