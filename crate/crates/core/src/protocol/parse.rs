use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{PointPx, ZoneId};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum ParseError {
    #[error("no `Region N: SCORE` lines found")]
    NoRegionScores,
    #[error("missing <{0}> tag")]
    MissingTag(&'static str),
    #[error("cell index {0} outside 1..=25")]
    IndexOutOfRange(i64),
    #[error("candidate index {index} outside 1..={count}")]
    CandidateOutOfRange { index: i64, count: usize },
    #[error("unrecognized zone {0:?}")]
    UnknownZone(String),
    #[error("no coordinate pair found")]
    NoPoint,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParseWarning {
    MissingRegion { index: u8 },
    DuplicateRegion { index: u8 },
    RegionIndexOutOfRange { index: i64 },
    ScoreClamped { index: u8, raw: String },
    UntaggedVerdict,
    NoVerdict,
    BoxCenterUsed,
}

/// A parsed value plus whatever the parser had to tolerate to get it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Parsed<T> {
    pub value: T,
    pub warnings: Vec<ParseWarning>,
}

impl<T> Parsed<T> {
    fn clean(value: T) -> Self {
        Self {
            value,
            warnings: Vec::new(),
        }
    }
}

/// Scores for regions 1..=9, each in `[0, 100]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionScores {
    scores: BTreeMap<u8, u8>,
}

impl RegionScores {
    pub const REGIONS: u8 = 9;

    pub fn from_fn(mut f: impl FnMut(u8) -> u8) -> Self {
        Self {
            scores: (1..=Self::REGIONS).map(|i| (i, f(i).min(100))).collect(),
        }
    }

    /// Score of region `index` (1-based).
    pub fn get(&self, index: u8) -> u8 {
        self.scores[&index]
    }

    pub fn iter(&self) -> impl Iterator<Item = (u8, u8)> + '_ {
        self.scores.iter().map(|(&i, &s)| (i, s))
    }

    /// Region indices by descending score, ties to the lower index.
    pub fn ranked(&self) -> Vec<u8> {
        let mut order: Vec<u8> = self.scores.keys().copied().collect();
        order.sort_by(|a, b| self.get(*b).cmp(&self.get(*a)).then(a.cmp(b)));
        order
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictTag {
    Answer,
    Relevance,
}

impl VerdictTag {
    fn name(self) -> &'static str {
        match self {
            VerdictTag::Answer => "answer",
            VerdictTag::Relevance => "relevance",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub value: bool,
    pub raw_reasoning: String,
}

/// A 5×5 cell (1..=25) and one of its nine inner zones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellZoneChoice {
    pub index: u8,
    pub zone: ZoneId,
}

fn regex(cell: &'static OnceLock<Regex>, pattern: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pattern).expect("static pattern"))
}

fn region_line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    regex(
        &RE,
        r"(?i)region[\s*_]*(-?\d+)[\s*_]*[:：=][\s*_]*(-?\d+(?:\.\d+)?)",
    )
}

pub fn parse_region_scores(text: &str) -> Result<Parsed<RegionScores>, ParseError> {
    let mut found: BTreeMap<u8, u8> = BTreeMap::new();
    let mut warnings = Vec::new();
    let mut any = false;
    for cap in region_line_re().captures_iter(text) {
        let index: i64 = match cap[1].parse() {
            Ok(i) => i,
            Err(_) => continue,
        };
        if !(1..=9).contains(&index) {
            warnings.push(ParseWarning::RegionIndexOutOfRange { index });
            continue;
        }
        let index = index as u8;
        any = true;
        let raw = &cap[2];
        let value: f64 = raw.parse().unwrap_or(0.0);
        let clamped = value.round().clamp(0.0, 100.0);
        if clamped != value.round() {
            warnings.push(ParseWarning::ScoreClamped {
                index,
                raw: raw.to_string(),
            });
        }
        if found.contains_key(&index) {
            warnings.push(ParseWarning::DuplicateRegion { index });
            continue;
        }
        found.insert(index, clamped as u8);
    }
    if !any {
        return Err(ParseError::NoRegionScores);
    }
    for index in 1..=RegionScores::REGIONS {
        if !found.contains_key(&index) {
            warnings.push(ParseWarning::MissingRegion { index });
        }
    }
    Ok(Parsed {
        value: RegionScores::from_fn(|i| found.get(&i).copied().unwrap_or(0)),
        warnings,
    })
}

fn reasoning_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    regex(&RE, r"(?is)<reasoning>(.*?)</reasoning>")
}

fn yes_no_token_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    regex(&RE, r"(?i)\b(yes|no)\b")
}

fn tag_re(tag: VerdictTag) -> &'static Regex {
    static ANSWER: OnceLock<Regex> = OnceLock::new();
    static RELEVANCE: OnceLock<Regex> = OnceLock::new();
    match tag {
        VerdictTag::Answer => regex(&ANSWER, r"(?is)<answer>\s*\**\s*(yes|no)\b[^<]*</answer>"),
        VerdictTag::Relevance => regex(
            &RELEVANCE,
            r"(?is)<relevance>\s*\**\s*(yes|no)\b[^<]*</relevance>",
        ),
    }
}

/// Reads a yes/no verdict from `<tag>yes</tag>`; the last tagged answer wins.
/// Without a tag the last standalone yes/no token is used; with neither the
/// verdict is "no". Both fallbacks carry a warning.
pub fn parse_tagged_yes_no(text: &str, tag: VerdictTag) -> Parsed<Verdict> {
    let raw_reasoning = reasoning_re()
        .captures(text)
        .map(|c| c[1].trim().to_string())
        .unwrap_or_else(|| text.trim().to_string());
    let is_yes = |s: &str| s.eq_ignore_ascii_case("yes");
    let echoed = |c: &regex::Captures| {
        let inner = &c[0][c[0].find('>').map_or(0, |i| i + 1)..];
        inner.trim_start().to_ascii_lowercase().starts_with("yes/no")
    };
    if let Some(cap) = tag_re(tag).captures_iter(text).filter(|c| !echoed(c)).last() {
        return Parsed::clean(Verdict {
            value: is_yes(&cap[1]),
            raw_reasoning,
        });
    }
    // Strip the template echo ("<answer>yes/no</answer>") so it isn't read as a vote.
    let echo = format!("<{0}>yes/no</{0}>", tag.name());
    let stripped = text.replace(&echo, " ");
    match yes_no_token_re().captures_iter(&stripped).last() {
        Some(cap) => Parsed {
            value: Verdict {
                value: is_yes(&cap[1]),
                raw_reasoning,
            },
            warnings: vec![ParseWarning::UntaggedVerdict],
        },
        None => Parsed {
            value: Verdict {
                value: false,
                raw_reasoning,
            },
            warnings: vec![ParseWarning::NoVerdict],
        },
    }
}

fn index_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    regex(&RE, r"(?is)<index>\s*\**\s*(-?\d+)\s*\**\s*</index>")
}

fn location_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    regex(&RE, r"(?is)<location>\s*\**\s*([^<]*?)\s*\**\s*</location>")
}

fn last_capture<'t>(re: &Regex, text: &'t str) -> Option<&'t str> {
    re.captures_iter(text)
        .last()
        .and_then(|c| c.get(1))
        .map(|m| m.as_str())
}

pub fn parse_index_location(text: &str) -> Result<CellZoneChoice, ParseError> {
    let index = last_capture(index_re(), text).ok_or(ParseError::MissingTag("index"))?;
    let location = last_capture(location_re(), text).ok_or(ParseError::MissingTag("location"))?;
    let index: i64 = index
        .parse()
        .map_err(|_| ParseError::IndexOutOfRange(i64::MAX))?;
    if !(1..=25).contains(&index) {
        return Err(ParseError::IndexOutOfRange(index));
    }
    let zone = location
        .parse::<ZoneId>()
        .map_err(|_| ParseError::UnknownZone(location.to_string()))?;
    Ok(CellZoneChoice {
        index: index as u8,
        zone,
    })
}

fn candidate_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    regex(&RE, r"(?is)<candidate>\s*\**\s*(?:candidate\s*)?#?(-?\d+)\s*\**\s*</candidate>")
}

/// 1-based candidate pick from `<candidate>N</candidate>`.
pub fn parse_candidate_index(text: &str, count: usize) -> Result<usize, ParseError> {
    let raw = last_capture(candidate_re(), text).ok_or(ParseError::MissingTag("candidate"))?;
    let index: i64 = raw.parse().map_err(|_| ParseError::CandidateOutOfRange {
        index: i64::MAX,
        count,
    })?;
    if index < 1 || index as u64 > count as u64 {
        return Err(ParseError::CandidateOutOfRange { index, count });
    }
    Ok(index as usize)
}

const NUM: &str = r"(-?\d+(?:\.\d+)?)";

fn box_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // [x1, y1, x2, y2] / (x1,y1,x2,y2) / (x1,y1),(x2,y2)
    let pat = format!(
        r"[\[(]\s*{NUM}\s*,\s*{NUM}\s*(?:,|\)\s*,\s*\()\s*{NUM}\s*,\s*{NUM}\s*[\])]"
    );
    RE.get_or_init(|| Regex::new(&pat).expect("static pattern"))
}

fn pair_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    let pat = format!(r"{NUM}\s*,\s*{NUM}");
    RE.get_or_init(|| Regex::new(&pat).expect("static pattern"))
}

fn to_px(s: &str) -> Option<i64> {
    let v: f64 = s.parse().ok()?;
    v.is_finite().then(|| v.floor().clamp(-1e12, 1e12) as i64)
}

/// First coordinate pair in the text. A four-number box that starts no later
/// than the first pair is reduced to its floor center.
pub fn parse_point(text: &str) -> Result<Parsed<PointPx>, ParseError> {
    let boxed = box_re().captures(text);
    let pair = pair_re().captures(text);
    let box_start = boxed.as_ref().map(|c| c.get(0).unwrap().start());
    let pair_start = pair.as_ref().map(|c| c.get(0).unwrap().start());
    let use_box = match (box_start, pair_start) {
        (Some(b), Some(p)) => b <= p,
        (Some(_), None) => true,
        _ => false,
    };
    if use_box {
        let c = boxed.unwrap();
        let v: Option<Vec<i64>> = (1..=4).map(|i| to_px(&c[i])).collect();
        if let Some(v) = v {
            return Ok(Parsed {
                value: PointPx::new((v[0] + v[2]).div_euclid(2), (v[1] + v[3]).div_euclid(2)),
                warnings: vec![ParseWarning::BoxCenterUsed],
            });
        }
    }
    let c = pair.ok_or(ParseError::NoPoint)?;
    match (to_px(&c[1]), to_px(&c[2])) {
        (Some(x), Some(y)) => Ok(Parsed::clean(PointPx::new(x, y))),
        _ => Err(ParseError::NoPoint),
    }
}
