use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::task::{Category, UiType};
use crate::geometry::{BoxClosed, PointPx};

/// 1 when `p` lies in `bbox` with both edges inclusive, else 0.
pub fn hit(p: PointPx, bbox: &BoxClosed) -> u8 {
    u8::from(bbox.x_min <= p.x && p.x <= bbox.x_max && bbox.y_min <= p.y && p.y <= bbox.y_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub category: Category,
    pub ui_type: UiType,
    pub hits: u64,
    pub n: u64,
}

impl Cell {
    pub fn accuracy(&self) -> f64 {
        ratio(self.hits, self.n)
    }
}

fn ratio(hits: u64, n: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        hits as f64 / n as f64
    }
}

/// Accuracy broken down by category and UI type. Every category/type pair
/// has a cell, possibly with `n = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub fingerprint: String,
    pub cells: Vec<Cell>,
    pub scanner_calls: u64,
    pub locator_calls: u64,
    /// Tasks that could not run (unreadable image and the like); counted as
    /// misses.
    pub failures: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("{results} results for {tasks} tasks")]
    LengthMismatch { results: usize, tasks: usize },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("report csv has no rows")]
    Empty,
    #[error("report csv mixes labels {0:?} and {1:?}")]
    MixedLabels(String, String),
}

impl EvalReport {
    pub fn empty(label: impl Into<String>, fingerprint: impl Into<String>) -> Self {
        let cells = Category::ALL
            .iter()
            .flat_map(|&category| {
                UiType::ALL.iter().map(move |&ui_type| Cell {
                    category,
                    ui_type,
                    hits: 0,
                    n: 0,
                })
            })
            .collect();
        Self {
            label: label.into(),
            fingerprint: fingerprint.into(),
            cells,
            scanner_calls: 0,
            locator_calls: 0,
            failures: 0,
        }
    }

    pub fn record(&mut self, category: Category, ui_type: UiType, hit: bool) {
        let cell = self
            .cells
            .iter_mut()
            .find(|c| c.category == category && c.ui_type == ui_type)
            .expect("all cells present");
        cell.n += 1;
        cell.hits += u64::from(hit);
    }

    pub fn cell(&self, category: Category, ui_type: UiType) -> Cell {
        *self
            .cells
            .iter()
            .find(|c| c.category == category && c.ui_type == ui_type)
            .expect("all cells present")
    }

    fn sum(&self, keep: impl Fn(&Cell) -> bool) -> (u64, u64) {
        self.cells
            .iter()
            .filter(|c| keep(c))
            .fold((0, 0), |(h, n), c| (h + c.hits, n + c.n))
    }

    pub fn category_counts(&self, category: Category) -> (u64, u64) {
        self.sum(|c| c.category == category)
    }

    pub fn category_accuracy(&self, category: Category) -> f64 {
        let (h, n) = self.category_counts(category);
        ratio(h, n)
    }

    pub fn ui_type_accuracy(&self, ui_type: UiType) -> f64 {
        let (h, n) = self.sum(|c| c.ui_type == ui_type);
        ratio(h, n)
    }

    pub fn hits(&self) -> u64 {
        self.sum(|_| true).0
    }

    pub fn n(&self) -> u64 {
        self.sum(|_| true).1
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.hits(), self.n())
    }

    pub fn scanner_calls_per_task(&self) -> f64 {
        if self.n() == 0 {
            0.0
        } else {
            self.scanner_calls as f64 / self.n() as f64
        }
    }

    /// One CSV row per cell; totals repeat on each row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ReportError> {
        let mut w = csv::Writer::from_writer(out);
        for c in &self.cells {
            w.serialize(CsvRow {
                label: self.label.clone(),
                fingerprint: self.fingerprint.clone(),
                category: c.category,
                ui_type: c.ui_type,
                hits: c.hits,
                n: c.n,
                accuracy: c.accuracy(),
                scanner_calls: self.scanner_calls,
                locator_calls: self.locator_calls,
                failures: self.failures,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, ReportError> {
        let mut rows = csv::Reader::from_reader(input);
        let mut report: Option<EvalReport> = None;
        for row in rows.deserialize::<CsvRow>() {
            let row = row?;
            let r = report.get_or_insert_with(|| EvalReport {
                scanner_calls: row.scanner_calls,
                locator_calls: row.locator_calls,
                failures: row.failures,
                ..EvalReport::empty(row.label.clone(), row.fingerprint.clone())
            });
            if r.label != row.label {
                return Err(ReportError::MixedLabels(r.label.clone(), row.label));
            }
            if let Some(c) = r
                .cells
                .iter_mut()
                .find(|c| c.category == row.category && c.ui_type == row.ui_type)
            {
                c.hits = row.hits;
                c.n = row.n;
            }
        }
        report.ok_or(ReportError::Empty)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    label: String,
    fingerprint: String,
    category: Category,
    ui_type: UiType,
    hits: u64,
    n: u64,
    accuracy: f64,
    scanner_calls: u64,
    locator_calls: u64,
    failures: u64,
}

fn pct(hits: u64, n: u64) -> String {
    if n == 0 {
        "-".into()
    } else {
        format!("{:.2}", 100.0 * hits as f64 / n as f64)
    }
}

/// Accuracy table, one row per report: text, icon and average for each
/// category, then the same three over all tasks. Values are percentages.
pub fn markdown_table(reports: &[EvalReport]) -> String {
    let mut out = String::from("| Method |");
    for c in Category::ALL {
        out += &format!(" {c} Text | {c} Icon | {c} Avg |");
    }
    out += " Avg Text | Avg Icon | Avg |\n|---|";
    out += &"---:|".repeat(Category::ALL.len() * 3 + 3);
    out.push('\n');
    for r in reports {
        out += &format!("| {} |", r.label);
        for cat in Category::ALL {
            for ui in UiType::ALL {
                let c = r.cell(cat, ui);
                out += &format!(" {} |", pct(c.hits, c.n));
            }
            let (h, n) = r.category_counts(cat);
            out += &format!(" {} |", pct(h, n));
        }
        for ui in UiType::ALL {
            let (h, n) = r.sum(|c| c.ui_type == ui);
            out += &format!(" {} |", pct(h, n));
        }
        out += &format!(" {} |\n", pct(r.hits(), r.n()));
    }
    out
}
