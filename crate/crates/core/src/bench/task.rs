use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::synth::SyntheticScene;
use crate::geometry::{BoxClosed, ImageSize};
use crate::pipeline::TaskContext;
use crate::protocol::Variant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Development,
    Creative,
    #[serde(rename = "CAD")]
    Cad,
    Scientific,
    Office,
    #[serde(rename = "OS")]
    Os,
}

impl Category {
    /// Table column order.
    pub const ALL: [Category; 6] = [
        Category::Development,
        Category::Creative,
        Category::Cad,
        Category::Scientific,
        Category::Office,
        Category::Os,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Category::Development => "Development",
            Category::Creative => "Creative",
            Category::Cad => "CAD",
            Category::Scientific => "Scientific",
            Category::Office => "Office",
            Category::Os => "OS",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Category {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        let c = match s.as_str() {
            "development" | "dev" | "coding" => Category::Development,
            "creative" => Category::Creative,
            "cad" => Category::Cad,
            "scientific" => Category::Scientific,
            "office" => Category::Office,
            "os" | "operating systems" | "operating system" => Category::Os,
            _ => return Err(format!("unknown category {s:?}")),
        };
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UiType {
    Text,
    Icon,
}

impl UiType {
    pub const ALL: [UiType; 2] = [UiType::Text, UiType::Icon];

    pub fn label(self) -> &'static str {
        match self {
            UiType::Text => "text",
            UiType::Icon => "icon",
        }
    }
}

impl fmt::Display for UiType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for UiType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "text" => Ok(UiType::Text),
            "icon" => Ok(UiType::Icon),
            other => Err(format!("unknown ui_type {other:?}")),
        }
    }
}

/// Where a task's pixels come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageSource {
    File(PathBuf),
    Synthetic(SyntheticScene),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingTask {
    pub id: String,
    pub image: ImageSource,
    pub instruction: String,
    pub application_name: String,
    pub system_name: String,
    /// Closed on both edges.
    pub gt_bbox: BoxClosed,
    pub category: Category,
    pub ui_type: UiType,
    pub subset_id: String,
}

impl GroundingTask {
    pub fn variant(&self) -> Variant {
        Variant::for_subset(&self.subset_id)
    }

    pub fn context(&self) -> TaskContext {
        TaskContext {
            id: self.id.clone(),
            instruction: self.instruction.clone(),
            application_name: self.application_name.clone(),
            system_name: self.system_name.clone(),
            variant: self.variant(),
        }
    }
}

/// A manifest entry that could not become a task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedEntry {
    /// 1-based line number in the manifest.
    pub line: usize,
    pub id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub tasks: Vec<GroundingTask>,
    pub skipped: Vec<SkippedEntry>,
    /// Non-empty manifest lines seen.
    pub entries: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read manifest {path}: {source}")]
    Manifest {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn platform_name(platform: &str) -> String {
    match platform.trim().to_ascii_lowercase().as_str() {
        "windows" | "win" => "Windows".into(),
        "macos" | "mac" | "osx" => "macOS".into(),
        "linux" | "ubuntu" => "Linux".into(),
        "" => "desktop".into(),
        other => other.to_string(),
    }
}

fn category_for(entry: &Value, subset: &str) -> Result<Category, String> {
    if let Some(c) = entry.get("category").and_then(Value::as_str) {
        return c.parse();
    }
    if subset.starts_with("common_") {
        return Ok(Category::Os);
    }
    Err("missing field `category`".into())
}

fn text_field<'v>(entry: &'v Value, names: &[&str]) -> Result<&'v str, String> {
    names
        .iter()
        .find_map(|n| entry.get(*n).and_then(Value::as_str))
        .ok_or_else(|| format!("missing field `{}`", names[0]))
}

fn parse_entry(entry: &Value, root: &Path, line: usize) -> Result<GroundingTask, String> {
    let img = text_field(entry, &["img_filename"])?;
    let instruction = text_field(entry, &["instruction"])?;
    if instruction.trim().is_empty() {
        return Err("empty instruction".into());
    }
    let bbox: Vec<f64> = entry
        .get("bbox")
        .and_then(Value::as_array)
        .ok_or("missing field `bbox`")?
        .iter()
        .map(|v| v.as_f64().ok_or("bbox values must be numbers"))
        .collect::<Result<_, _>>()?;
    if bbox.len() != 4 {
        return Err(format!("bbox must have 4 values, got {}", bbox.len()));
    }
    let b: Vec<i64> = bbox.iter().map(|v| v.floor() as i64).collect();
    if b[0] > b[2] || b[1] > b[3] {
        return Err("inverted bbox".into());
    }
    let gt_bbox = BoxClosed::new(b[0], b[1], b[2], b[3]).map_err(|e| e.to_string())?;
    let application = text_field(entry, &["application"])?;
    let platform = text_field(entry, &["platform"])?;
    let ui_type: UiType = text_field(entry, &["ui_type"])?.parse()?;
    let subset = text_field(entry, &["group", "subset"])?;
    let category = category_for(entry, subset)?;
    let id = entry
        .get("id")
        .and_then(Value::as_str)
        .map(str::to_owned)
        .unwrap_or_else(|| format!("{subset}-{line}"));
    Ok(GroundingTask {
        id,
        image: ImageSource::File(root.join(img)),
        instruction: instruction.to_string(),
        application_name: application.to_string(),
        system_name: platform_name(platform),
        gt_bbox,
        category,
        ui_type,
        subset_id: subset.to_string(),
    })
}

/// Parses a JSON-lines manifest. Image paths are resolved against `root`
/// but not opened; unreadable images surface when a task runs.
pub fn parse_manifest(text: &str, root: &Path) -> Dataset {
    let mut ds = Dataset::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        ds.entries += 1;
        let line_no = i + 1;
        let entry: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => {
                ds.skipped.push(SkippedEntry {
                    line: line_no,
                    id: None,
                    reason: format!("malformed record: {e}"),
                });
                continue;
            }
        };
        match parse_entry(&entry, root, line_no) {
            Ok(t) => ds.tasks.push(t),
            Err(reason) => ds.skipped.push(SkippedEntry {
                line: line_no,
                id: entry.get("id").and_then(Value::as_str).map(str::to_owned),
                reason,
            }),
        }
    }
    ds
}

pub fn load_dataset(root: &Path, manifest: &Path) -> Result<Dataset, DatasetError> {
    let text = std::fs::read_to_string(manifest).map_err(|source| DatasetError::Manifest {
        path: manifest.to_path_buf(),
        source,
    })?;
    Ok(parse_manifest(&text, root))
}

/// Keeps only tasks whose subset is listed. An empty list keeps everything.
pub fn filter_subsets(tasks: Vec<GroundingTask>, subsets: &[String]) -> Vec<GroundingTask> {
    if subsets.is_empty() {
        return tasks;
    }
    tasks
        .into_iter()
        .filter(|t| subsets.iter().any(|s| s == &t.subset_id))
        .collect()
}

/// Checks the ground-truth box lies inside an image of `size`.
pub fn check_bbox(task: &GroundingTask, size: ImageSize) -> Result<(), String> {
    let b = task.gt_bbox;
    if b.x_min < 0 || b.y_min < 0 || b.x_max >= size.width as i64 || b.y_max >= size.height as i64 {
        return Err(format!(
            "bbox [{}, {}, {}, {}] outside {}x{} image",
            b.x_min, b.y_min, b.x_max, b.y_max, size.width, size.height
        ));
    }
    Ok(())
}
