//! Seeded synthetic screenshots with one labeled target per image.
//!
//! Scenes render lazily: only the requested region is ever drawn, so a suite
//! of 4K screens costs nothing until an agent asks for pixels.

use image::{Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::task::{Category, GroundingTask, ImageSource, UiType};
use crate::agents::{OracleTruth, Screen};
use crate::geometry::{BoxClosed, ImageSize, RectPx};

/// A screen of the given size filled with white.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlankScreen(pub ImageSize);

impl Screen for BlankScreen {
    fn size(&self) -> ImageSize {
        self.0
    }

    fn render(&self, region: RectPx) -> RgbImage {
        RgbImage::from_pixel(region.width() as u32, region.height() as u32, Rgb([255, 255, 255]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub size: ImageSize,
    pub target: BoxClosed,
    /// Look-alike elements elsewhere on screen.
    pub distractors: Vec<BoxClosed>,
    pub seed: u64,
}

fn mix(mut h: u64) -> u64 {
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51afd7ed558ccd);
    h ^= h >> 33;
    h = h.wrapping_mul(0xc4ceb9fe1a85ec53);
    h ^ (h >> 33)
}

impl SyntheticScene {
    pub fn truth(&self, task_key: &str) -> OracleTruth {
        OracleTruth {
            task_key: task_key.to_string(),
            target: self.target,
            distractors: self.distractors.clone(),
        }
    }

    // Panels of muted color with a title bar, roughly like tiled windows.
    fn background(&self, x: i64, y: i64) -> Rgb<u8> {
        let (pw, ph) = (480, 320);
        let panel = mix(self.seed ^ ((x / pw) as u64) << 20 ^ (y / ph) as u64);
        let shade = 200 + (panel % 48) as u8;
        if y % ph < 28 {
            return Rgb([shade / 2, shade / 2 + 10, shade / 2 + 30]);
        }
        // Faint text-like rows.
        if (y % ph) % 22 < 3 && (x % pw) % 140 < 90 + (panel >> 8) as i64 % 40 {
            return Rgb([shade - 60, shade - 60, shade - 60]);
        }
        Rgb([shade, shade, shade.saturating_add(6)])
    }
}

impl Screen for SyntheticScene {
    fn size(&self) -> ImageSize {
        self.size
    }

    fn render(&self, region: RectPx) -> RgbImage {
        let mut img = RgbImage::from_fn(region.width() as u32, region.height() as u32, |x, y| {
            self.background(region.x1() + x as i64, region.y1() + y as i64)
        });
        let widgets = self
            .distractors
            .iter()
            .map(|b| (b, Rgb([40, 110, 200])))
            .chain([(&self.target, Rgb([30, 120, 210]))]);
        for (b, fill) in widgets {
            let Some(r) = b.to_rect().intersection(&region) else {
                continue;
            };
            for y in r.y1()..r.y2() {
                for x in r.x1()..r.x2() {
                    let edge = x == b.x_min || x == b.x_max || y == b.y_min || y == b.y_max;
                    let px = if edge { Rgb([20, 20, 20]) } else { fill };
                    img.put_pixel((x - region.x1()) as u32, (y - region.y1()) as u32, px);
                }
            }
        }
        img
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteSpec {
    pub tasks: usize,
    pub seed: u64,
    pub resolutions: Vec<ImageSize>,
    pub distractors: usize,
    /// Target side lengths are drawn from `[min, max]`.
    pub target_px: (u32, u32),
}

impl Default for SuiteSpec {
    fn default() -> Self {
        Self {
            tasks: 200,
            seed: 0,
            resolutions: vec![
                ImageSize { width: 3840, height: 2160 },
                ImageSize { width: 3600, height: 2400 },
                ImageSize { width: 2560, height: 1440 },
                ImageSize { width: 1920, height: 1080 },
            ],
            distractors: 3,
            target_px: (8, 48),
        }
    }
}

const APPS: [(Category, &[(&str, &str)]); 6] = [
    (Category::Development, &[("VSCode", "vscode_macos"), ("PyCharm", "pycharm_macos")]),
    (Category::Creative, &[("Photoshop", "photoshop_windows"), ("Blender", "blender_windows")]),
    (Category::Cad, &[("AutoCAD", "autocad_windows"), ("SolidWorks", "solidworks_windows")]),
    (Category::Scientific, &[("MATLAB", "matlab_macos"), ("Origin", "origin_windows")]),
    (Category::Office, &[("Word", "word_macos"), ("Excel", "excel_windows")]),
    (Category::Os, &[("Linux", "common_linux"), ("Windows", "common_windows"), ("macOS", "common_macos")]),
];

const ICONS: [&str; 8] = ["save", "undo", "zoom in", "settings", "export", "layers", "search", "close panel"];
const LABELS: [&str; 8] = ["File", "Insert", "Render", "Run", "Format", "Help", "Apply", "Preferences"];

fn system_for(subset: &str) -> &'static str {
    if subset.ends_with("macos") {
        "macOS"
    } else if subset.ends_with("linux") {
        "Linux"
    } else {
        "Windows"
    }
}

fn random_box(rng: &mut ChaCha8Rng, size: ImageSize, w: i64, h: i64) -> BoxClosed {
    let x = rng.gen_range(0..=size.width as i64 - w);
    let y = rng.gen_range(0..=size.height as i64 - h);
    BoxClosed::new(x, y, x + w - 1, y + h - 1).expect("non-empty box")
}

fn far_apart(a: &BoxClosed, b: &BoxClosed, margin: i64) -> bool {
    a.x_max + margin < b.x_min || b.x_max + margin < a.x_min || a.y_max + margin < b.y_min || b.y_max + margin < a.y_min
}

/// Generates `spec.tasks` tasks cycling through categories and UI types.
/// Distractors keep at least 128 px from the target so no 125 px crop
/// can show both.
pub fn generate_suite(spec: &SuiteSpec) -> Vec<GroundingTask> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (lo, hi) = (spec.target_px.0.max(1) as i64, spec.target_px.1.max(spec.target_px.0).max(1) as i64);
    (0..spec.tasks)
        .map(|i| {
            let size = *spec.resolutions.choose(&mut rng).expect("at least one resolution");
            let (category, apps) = APPS[i % APPS.len()];
            let ui_type = UiType::ALL[(i / APPS.len()) % 2];
            let (app, subset) = *apps.choose(&mut rng).unwrap();
            let (w, h, instruction) = match ui_type {
                UiType::Icon => {
                    let s = rng.gen_range(lo..=hi);
                    (s, s, format!("click the {} icon", ICONS.choose(&mut rng).unwrap()))
                }
                UiType::Text => (
                    rng.gen_range(lo.max(hi / 2)..=hi),
                    rng.gen_range(lo..=(lo + hi) / 2),
                    format!("open the {} menu", LABELS.choose(&mut rng).unwrap()),
                ),
            };
            let target = random_box(&mut rng, size, w, h);
            let mut distractors = Vec::with_capacity(spec.distractors);
            let mut attempts = 0;
            while distractors.len() < spec.distractors && attempts < 1000 {
                attempts += 1;
                let d = random_box(&mut rng, size, w, h);
                if far_apart(&d, &target, 128) {
                    distractors.push(d);
                }
            }
            let scene_seed = rng.gen();
            let id = format!("synth-{}-{i:04}", spec.seed);
            GroundingTask {
                id,
                image: ImageSource::Synthetic(SyntheticScene {
                    size,
                    target,
                    distractors,
                    seed: scene_seed,
                }),
                instruction,
                application_name: app.to_string(),
                system_name: system_for(subset).to_string(),
                gt_bbox: target,
                category,
                ui_type,
                subset_id: subset.to_string(),
            }
        })
        .collect()
}
