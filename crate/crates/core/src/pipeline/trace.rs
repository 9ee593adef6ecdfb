use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::geometry::{PointPx, RectPx};
use crate::protocol::ParseWarning;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineStage {
    Allocate,
    Refine,
    Verify,
    Consensus,
    Enhance,
    Decide,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub region: RectPx,
    pub scale: u32,
}

/// One entry of a run's decision log. Serialized one per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    ScannerCall {
        stage: PipelineStage,
        call: u32,
        prompt: String,
        images: Vec<ImageRef>,
        reply: Result<String, String>,
    },
    LocatorCall {
        stage: PipelineStage,
        call: u32,
        image: ImageRef,
        /// Point in the image's local frame, after clamping.
        reply: Result<PointPx, String>,
    },
    ParseWarnings {
        stage: PipelineStage,
        warnings: Vec<ParseWarning>,
    },
    ParseFailure {
        stage: PipelineStage,
        error: String,
    },
    NodeScored {
        rect: RectPx,
        depth: u32,
        scores: Vec<u8>,
        selected: Vec<u8>,
    },
    LeafEmitted {
        rect: RectPx,
        depth: u32,
        score: u8,
    },
    CandidateAdded {
        index: usize,
        crop: RectPx,
        locator_point: PointPx,
        verdict: super::Verdict,
    },
    CandidateChosen {
        index: usize,
        eligible: Vec<usize>,
        by: String,
    },
    Resampled {
        region: RectPx,
        factor: u32,
        method: String,
    },
    Points {
        p_scanner: Option<PointPx>,
        p_locator: Option<PointPx>,
    },
    Fallback {
        stage: PipelineStage,
        reason: String,
    },
    BudgetExhausted {
        stage: PipelineStage,
        limit: String,
    },
    Final {
        point: PointPx,
        fallback_level: super::FallbackLevel,
    },
}

/// Writes each event as one JSON object per line.
pub fn write_jsonl<W: Write>(mut out: W, events: &[TraceEvent]) -> io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl(text: &str) -> Result<Vec<TraceEvent>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
