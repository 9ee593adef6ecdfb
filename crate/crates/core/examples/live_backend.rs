// Grounds one screenshot with real models over a chat-completion API.
// Needs the key variable named in the backend config (OPENROUTER_API_KEY
// by default); without it the example only prints what it would do.

use groundscan::agents::{AgentImage, BackendConfig, LocatorAgent, RemoteLocator, RemoteScanner};
use groundscan::bench::synth::{generate_suite, SuiteSpec};
use groundscan::bench::open_screen;
use groundscan::pipeline::{run, PipelineConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let scanner_cfg = BackendConfig::scanner_defaults();
    let locator_cfg = BackendConfig::locator_defaults();
    if scanner_cfg.api_key().is_err() {
        println!("{} is not set; scanner {} and locator {} would be called at {}", scanner_cfg.api_key_env, scanner_cfg.model, locator_cfg.model, scanner_cfg.endpoint);
        return Ok(());
    }
    let scanner = RemoteScanner::new(scanner_cfg)?;
    let locator = RemoteLocator::new(locator_cfg)?;

    let task = generate_suite(&SuiteSpec { tasks: 1, ..SuiteSpec::default() }).remove(0);
    let (screen, _) = open_screen(&task)?;
    let direct = locator.ground(&task.instruction, &AgentImage::full(screen.as_ref()))?;
    let result = run(screen.as_ref(), &task.context(), &PipelineConfig::default(), &scanner, &locator);
    println!("direct {direct:?}, pipeline {:?} ({:?})", result.final_point, result.fallback_level);
    Ok(())
}

fn main() {
    run_example().unwrap();
}
