// Reading a JSON-lines task manifest. Bad lines are skipped and reported.

use groundscan::bench::{open_screen, parse_manifest};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("groundscan-manifest-example");
    std::fs::create_dir_all(&dir)?;
    image::RgbImage::from_pixel(800, 600, image::Rgb([240, 240, 240])).save(dir.join("shot.png"))?;

    let manifest = r#"{"id": "a", "img_filename": "shot.png", "instruction": "close the dialog", "bbox": [700, 10, 720, 30], "application": "vscode", "platform": "linux", "ui_type": "icon", "group": "Dev", "subset": "vscode_linux"}
{"id": "b", "img_filename": "shot.png", "instruction": "open terminal", "bbox": [50, 50, 10, 10], "application": "vscode", "platform": "linux", "ui_type": "text", "group": "Dev", "subset": "vscode_linux"}
not json
"#;
    let dataset = parse_manifest(manifest, &dir);
    for task in &dataset.tasks {
        let (screen, _) = open_screen(task)?;
        println!("{} {:?} {:?} on {:?}", task.id, task.category, task.ui_type, screen.size());
    }
    for s in &dataset.skipped {
        println!("skipped line {}: {}", s.line, s.reason);
    }
    Ok(())
}

fn main() {
    run_example().unwrap();
}
