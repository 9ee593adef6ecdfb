//! Prompt templates and parsers for the structured parts of agent replies.
//!
//! Templates are shipped verbatim under `templates/` with `{placeholder}`
//! markers. Parsers are tolerant: they accept markdown and prose around the
//! expected fields and surface anything unusual as [`ParseWarning`]s rather
//! than failing.

mod parse;
mod render;

pub use parse::{
    parse_candidate_index, parse_index_location, parse_point, parse_region_scores,
    parse_tagged_yes_no, CellZoneChoice, ParseError, ParseWarning, Parsed, RegionScores,
    VerdictTag, Verdict,
};
pub use render::{render_prompt, template_text, PromptContext, RenderError};

use serde::{Deserialize, Serialize};

/// Subsets whose screenshots do not name a single application.
pub const SPECIAL_SUBSETS: [&str; 3] = ["common_linux", "common_windows", "common_macos"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Normal,
    Special,
}

impl Variant {
    pub fn for_subset(subset_id: &str) -> Variant {
        if SPECIAL_SUBSETS.contains(&subset_id) {
            Variant::Special
        } else {
            Variant::Normal
        }
    }
}

/// Prompt formats of the grounding models the locator may wrap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocatorStyle {
    #[default]
    OsAtlas,
    UGround,
    UGroundV1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    SelectionInitial,
    SelectionDeeper,
    RegionVerify,
    CrossmodalVerify,
    ConsensusSelect,
    ResolutionEnhance,
    FinalDecide,
    LocatorGround(LocatorStyle),
    BaselineGround,
}

impl Stage {
    /// Selection prompt for a region at `depth`; depth 0 is the whole screen.
    pub fn selection(depth: u32) -> Stage {
        if depth == 0 {
            Stage::SelectionInitial
        } else {
            Stage::SelectionDeeper
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptKind {
    pub stage: Stage,
    pub variant: Variant,
}

impl PromptKind {
    pub fn new(stage: Stage, variant: Variant) -> Self {
        Self { stage, variant }
    }

    pub(crate) fn template_name(&self) -> &'static str {
        use Stage::*;
        use Variant::*;
        match (self.stage, self.variant) {
            (SelectionInitial, Normal) => "selection_initial_normal",
            (SelectionInitial, Special) => "selection_initial_special",
            (SelectionDeeper, Normal) => "selection_deeper_normal",
            (SelectionDeeper, Special) => "selection_deeper_special",
            (RegionVerify, Normal) => "region_verify_normal",
            (RegionVerify, Special) => "region_verify_special",
            (CrossmodalVerify, Normal) => "crossmodal_verify_normal",
            (CrossmodalVerify, Special) => "crossmodal_verify_special",
            (ConsensusSelect, Normal) => "consensus_select_normal",
            (ConsensusSelect, Special) => "consensus_select_special",
            (ResolutionEnhance, Normal) => "resolution_enhance_normal",
            (ResolutionEnhance, Special) => "resolution_enhance_special",
            (FinalDecide, Normal) => "final_decide_normal",
            (FinalDecide, Special) => "final_decide_special",
            (LocatorGround(LocatorStyle::OsAtlas), _) => "locator_os_atlas",
            (LocatorGround(LocatorStyle::UGround), _) => "locator_uground",
            (LocatorGround(LocatorStyle::UGroundV1), _) => "locator_uground_v1",
            (BaselineGround, _) => "baseline_ground",
        }
    }
}

/// Phrases that identify which template produced a prompt. Agents that
/// simulate a model use these to decide what kind of answer to give.
pub mod markers {
    pub const SELECTION: &str = "Provide the possibilities for each region (Region 1 to Region 9";
    pub const REGION_VERIFY: &str = "<answer>yes/no</answer>";
    pub const CROSSMODAL_VERIFY: &str = "<relevance>yes/no</relevance>";
    pub const CONSENSUS: &str = "<candidate>N</candidate>";
    pub const ENHANCE: &str = "<index>xxx</index>";
    pub const DECIDE: &str = "Two click points have been proposed";
}
