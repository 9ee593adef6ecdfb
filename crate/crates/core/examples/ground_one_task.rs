// One task through the full pipeline, with its decision trace.

use groundscan::agents::{OracleConfig, OracleLocator, OracleScanner};
use groundscan::bench::synth::{generate_suite, SuiteSpec};
use groundscan::bench::{hit, open_screen};
use groundscan::pipeline::{run, write_jsonl, PipelineConfig, TraceEvent};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let task = generate_suite(&SuiteSpec { tasks: 1, seed: 42, ..SuiteSpec::default() }).remove(0);
    let (screen, distractors) = open_screen(&task)?;
    let truth = groundscan::agents::OracleTruth { task_key: task.id.clone(), target: task.gt_bbox, distractors };
    let config = OracleConfig { scanner_score_noise: 20.0, locator_sigma: 6.0, ..OracleConfig::perfect(42) };
    let scanner = OracleScanner::new(config.clone(), truth.clone());
    let locator = OracleLocator::new(config, truth);

    let result = run(screen.as_ref(), &task.context(), &PipelineConfig::default(), &scanner, &locator);
    println!("{}: \"{}\" on {:?}", task.id, task.instruction, screen.size());
    println!(
        "final {:?} (hit {}), {} candidates, {} scanner / {} locator calls, {:?}",
        result.final_point,
        hit(result.final_point, &task.gt_bbox),
        result.candidates.len(),
        result.call_counts.scanner,
        result.call_counts.locator,
        result.fallback_level
    );
    for event in &result.trace {
        if let TraceEvent::NodeScored { rect, depth, selected, .. } = event {
            println!("  depth {depth} {:?} kept {selected:?}", rect.to_array());
        }
    }

    let path = std::env::temp_dir().join("groundscan-trace.jsonl");
    write_jsonl(std::fs::File::create(&path)?, &result.trace)?;
    println!("trace written to {}", path.display());
    Ok(())
}

fn main() {
    run_example().unwrap();
}
