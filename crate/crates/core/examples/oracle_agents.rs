// Simulated agents that know where the target is. They answer the same
// prompts a real model would, with tunable noise.

use groundscan::agents::{AgentImage, LocatorAgent, OracleConfig, OracleLocator, OracleScanner, OracleTruth, ScannerAgent};
use groundscan::bench::synth::BlankScreen;
use groundscan::geometry::{BoxClosed, ImageSize, RectPx};
use groundscan::protocol::{render_prompt, PromptContext, PromptKind, Stage, Variant};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let truth = OracleTruth {
        task_key: "demo".into(),
        target: BoxClosed::new(1500, 300, 1530, 320)?,
        distractors: vec![BoxClosed::new(200, 900, 230, 920)?],
    };
    let noisy = OracleConfig {
        scanner_score_noise: 15.0,
        locator_sigma: 8.0,
        ..OracleConfig::perfect(3)
    };
    let scanner = OracleScanner::new(noisy.clone(), truth.clone());
    let locator = OracleLocator::new(noisy, truth);

    let screen = BlankScreen(ImageSize::new(1920, 1080)?);
    let ctx = PromptContext::new("click the save icon").application("word").system("windows");
    let prompt = render_prompt(PromptKind::new(Stage::SelectionInitial, Variant::Normal), &ctx)?;
    println!("{}", scanner.complete(&prompt, &[AgentImage::full(&screen)])?);

    let crop = AgentImage::view(&screen, RectPx::new(1450, 250, 1575, 375)?, 5);
    let p = locator.ground("click the save icon", &crop)?;
    println!("locator in the x5 crop: {p:?}");
    Ok(())
}

fn main() {
    run_example().unwrap();
}
