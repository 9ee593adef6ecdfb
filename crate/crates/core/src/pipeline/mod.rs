//! The coarse-to-fine grounding controller.
//!
//! A run moves through five stages:
//!
//! 1. **allocate**: the scanner scores a 3×3 split of the screen and the
//!    top-k regions seed the search frontier;
//! 2. **refine**: depth-first, best-score-first subdivision until a region's
//!    width or height drops below the stop threshold;
//! 3. **verify**: the locator proposes a point inside each leaf, a fixed-size
//!    crop is cut around it, and the scanner accepts or rejects the crop;
//! 4. **consensus**: among accepted crops the scanner picks one;
//! 5. **enhance**: the chosen crop is magnified, the scanner names a 5×5 cell
//!    and inner zone, the locator grounds again, and the scanner decides
//!    between the two points.
//!
//! Each stage has a deterministic fallback, so a run always yields a point
//! inside the image together with a complete [`TraceEvent`] log.

mod engine;
mod trace;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GridSpec, PointPx, RectPx};
use crate::protocol::Variant;

pub use engine::run;
pub use trace::{read_jsonl, write_jsonl, ImageRef, PipelineStage, TraceEvent};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid pipeline config: {0}")]
pub struct ConfigError(pub String);

/// Which verification prompt the scanner receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyPrompt {
    /// Full screenshot followed by the crop.
    #[default]
    CrossModal,
    /// The crop alone.
    RegionOnly,
}

/// Component deletions for ablation runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Full,
    /// Locator crops pass straight to consensus without verification.
    NoVerify,
    /// The highest-scoring region's candidate wins without a scanner pick.
    NoConsensus,
    /// The locator's leaf-level point is the final answer.
    NoEnhance,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::Full,
        Ablation::NoConsensus,
        Ablation::NoEnhance,
        Ablation::NoVerify,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoVerify => "no_verify",
            Ablation::NoConsensus => "no_consensus",
            Ablation::NoEnhance => "no_enhance",
        }
    }
}

impl std::str::FromStr for Ablation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s.replace('-', "_"))
            .ok_or_else(|| format!("unknown ablation {s:?} (full, no_verify, no_consensus, no_enhance)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub top_k: usize,
    pub stop_threshold_px: u32,
    pub crop_side_px: u32,
    pub upscale_factor: u32,
    pub coarse_grid: GridSpec,
    pub enhance_grid: GridSpec,
    pub max_depth: u32,
    pub max_scanner_calls: u32,
    pub max_candidates: usize,
    /// Extra attempts for an unparseable top-level selection reply.
    pub selection_retries: u32,
    pub verify_prompt: VerifyPrompt,
    pub verification: bool,
    pub consensus: bool,
    pub enhancement: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            top_k: 3,
            stop_threshold_px: 600,
            crop_side_px: 125,
            upscale_factor: 5,
            coarse_grid: GridSpec::THREE_BY_THREE,
            enhance_grid: GridSpec::FIVE_BY_FIVE,
            max_depth: 6,
            max_scanner_calls: 500,
            max_candidates: 128,
            selection_retries: 1,
            verify_prompt: VerifyPrompt::CrossModal,
            verification: true,
            consensus: true,
            enhancement: true,
        }
    }
}

impl PipelineConfig {
    pub fn with_ablation(mut self, ablation: Ablation) -> Self {
        self.verification = ablation != Ablation::NoVerify;
        self.consensus = ablation != Ablation::NoConsensus;
        self.enhancement = ablation != Ablation::NoEnhance;
        self
    }

    pub fn ablation(&self) -> Option<Ablation> {
        match (self.verification, self.consensus, self.enhancement) {
            (true, true, true) => Some(Ablation::Full),
            (false, true, true) => Some(Ablation::NoVerify),
            (true, false, true) => Some(Ablation::NoConsensus),
            (true, true, false) => Some(Ablation::NoEnhance),
            _ => None,
        }
    }

    /// A `max_scanner_calls` of zero is allowed and forces the fallback path.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: String| Err(ConfigError(m));
        if !(1..=9).contains(&self.top_k) {
            return err(format!("top_k must be in [1, 9], got {}", self.top_k));
        }
        if self.crop_side_px == 0 {
            return err("crop_side_px must be >= 1".into());
        }
        if self.stop_threshold_px < self.crop_side_px {
            return err(format!(
                "stop_threshold_px ({}) must be >= crop_side_px ({})",
                self.stop_threshold_px, self.crop_side_px
            ));
        }
        if self.upscale_factor == 0 {
            return err("upscale_factor must be >= 1".into());
        }
        // Both grids are spelled out in the prompt wording.
        if self.coarse_grid != GridSpec::THREE_BY_THREE {
            return err(format!("coarse_grid must be 3x3, got {}", self.coarse_grid));
        }
        if self.enhance_grid != GridSpec::FIVE_BY_FIVE {
            return err(format!("enhance_grid must be 5x5, got {}", self.enhance_grid));
        }
        if self.max_depth == 0 {
            return err("max_depth must be >= 1".into());
        }
        if self.max_candidates == 0 {
            return err("max_candidates must be >= 1".into());
        }
        Ok(())
    }
}

/// What the pipeline needs to know about a task besides its pixels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskContext {
    pub id: String,
    pub instruction: String,
    pub application_name: String,
    pub system_name: String,
    pub variant: Variant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchNode {
    /// Global frame.
    pub rect: RectPx,
    pub depth: u32,
    pub score: u8,
    /// Region indices (1..=9) from the screen down to this node.
    pub path: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    Rejected,
    /// Verification disabled or out of budget.
    Unchecked,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateCrop {
    /// Global frame.
    pub crop: RectPx,
    /// Global frame; always inside `crop`.
    pub locator_point: PointPx,
    pub verdict: Verdict,
    pub region_score: u8,
    pub path: Vec<u8>,
}

/// How far a run got before falling back. Ordered from best to worst.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackLevel {
    FullPipeline,
    ConsensusSkipped,
    LocatorOnly,
    CenterOfBestRegion,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallCounts {
    pub scanner: u32,
    pub locator: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingResult {
    pub task_id: String,
    /// Global frame, inside the image.
    pub final_point: PointPx,
    pub p_scanner: Option<PointPx>,
    pub p_locator: Option<PointPx>,
    pub chosen_candidate: Option<CandidateCrop>,
    pub candidates: Vec<CandidateCrop>,
    pub explored: Vec<SearchNode>,
    pub call_counts: CallCounts,
    pub fallback_level: FallbackLevel,
    pub trace: Vec<TraceEvent>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        PipelineConfig::default().validate().unwrap();
    }

    #[test]
    fn invalid_configs() {
        let base = PipelineConfig::default();
        for bad in [
            PipelineConfig { top_k: 0, ..base.clone() },
            PipelineConfig { top_k: 10, ..base.clone() },
            PipelineConfig { stop_threshold_px: 100, ..base.clone() },
            PipelineConfig { upscale_factor: 0, ..base.clone() },
            PipelineConfig { max_candidates: 0, ..base.clone() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
        PipelineConfig { max_scanner_calls: 0, ..base }.validate().unwrap();
    }

    #[test]
    fn ablation_flags_round_trip() {
        for a in Ablation::ALL {
            let cfg = PipelineConfig::default().with_ablation(a);
            assert_eq!(cfg.ablation(), Some(a));
            assert_eq!(a.name().parse::<Ablation>().unwrap(), a);
        }
    }
}
