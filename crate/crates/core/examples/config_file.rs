// Partial TOML configs keep the defaults of every key they leave out.

use groundscan::config::Config;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let config = Config::from_toml(
        r#"
[pipeline]
top_k = 5
stop_threshold_px = 512

[locator_backend]
model = "os-copilot/os-atlas-pro-7b"
coordinate_range = 1000

[oracle]
locator_sigma = 12.0
"#,
    )?;
    config.validate()?;
    println!("{}", config.to_toml());
    assert!(Config::from_toml("[pipeline]\ntopk = 5").is_err());
    Ok(())
}

fn main() {
    run_example().unwrap();
}
