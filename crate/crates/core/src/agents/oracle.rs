//! Ground-truth-aware stand-ins for the scanner and locator.
//!
//! The scanner recognizes which stage is asking by the prompt's template
//! markers and answers in the same text format a real model would, so the
//! pipeline's parsers are exercised unchanged. Every random draw comes from an
//! RNG keyed by `(seed, task, call site)`; the same question always gets the
//! same answer, independent of call order or thread.

use std::fmt::Write as _;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{AgentError, AgentImage, LocatorAgent, ScannerAgent};
use crate::geometry::{partition_grid, zone_of, BoxClosed, GridSpec, PointPx, RectPx, ZoneId};
use crate::protocol::markers;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Std-dev of additive noise on region scores (0–100 scale).
    pub scanner_score_noise: f64,
    /// Probability a verification verdict is flipped; also the error rate of
    /// every other choice (consensus, zone, decide).
    pub scanner_flip_prob: f64,
    /// Std-dev in pixels of the locator's error, in the frame it is shown.
    pub locator_sigma: f64,
    /// Extra std-dev as a fraction of the longer side of the image shown.
    /// Models a locator that resizes every input to a fixed resolution, so
    /// its pixel error grows with the view it is given.
    pub locator_sigma_rel: f64,
    /// Probability the locator points at a uniformly random decoy.
    pub locator_miss_prob: f64,
    /// Base score of regions showing a look-alike distractor element.
    pub distractor_score: u8,
    /// Probability the scanner accepts a crop showing only a distractor, and
    /// that such a crop wins over the true one in consensus.
    pub distractor_confusion: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self::perfect(0)
    }
}

impl OracleConfig {
    pub fn perfect(seed: u64) -> Self {
        Self {
            scanner_score_noise: 0.0,
            scanner_flip_prob: 0.0,
            locator_sigma: 0.0,
            locator_sigma_rel: 0.0,
            locator_miss_prob: 0.0,
            distractor_score: 10,
            distractor_confusion: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [
            ("scanner_flip_prob", self.scanner_flip_prob),
            ("locator_miss_prob", self.locator_miss_prob),
            ("distractor_confusion", self.distractor_confusion),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} must be in [0, 1], got {p}"));
            }
        }
        for (name, s) in [
            ("scanner_score_noise", self.scanner_score_noise),
            ("locator_sigma", self.locator_sigma),
            ("locator_sigma_rel", self.locator_sigma_rel),
        ] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(format!("{name} must be a finite value >= 0, got {s}"));
            }
        }
        if self.distractor_score > 100 {
            return Err("distractor_score must be <= 100".into());
        }
        Ok(())
    }
}

/// What the simulated agents know about one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleTruth {
    pub task_key: String,
    pub target: BoxClosed,
    #[serde(default)]
    pub distractors: Vec<BoxClosed>,
}

fn call_rng(seed: u64, task_key: &str, site: &str, frames: &[(RectPx, u32)], extra: &[u8]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((task_key.len() as u64).to_le_bytes());
    h.update(task_key.as_bytes());
    h.update(site.as_bytes());
    for (r, s) in frames {
        for v in r.to_array() {
            h.update(v.to_le_bytes());
        }
        h.update(s.to_le_bytes());
    }
    h.update(extra);
    ChaCha8Rng::from_seed(h.finalize().into())
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("sigma validated").sample(rng)
    } else {
        0.0
    }
}

/// Target center in the local (magnified) frame of `img`, at the middle of
/// the magnified pixel block.
fn to_view(p: PointPx, img: &AgentImage<'_>) -> PointPx {
    let s = img.scale() as i64;
    let r = img.region();
    PointPx::new((p.x - r.x1()) * s + s / 2, (p.y - r.y1()) * s + s / 2)
}

fn from_view(p: PointPx, img: &AgentImage<'_>) -> PointPx {
    let s = img.scale() as i64;
    let r = img.region();
    PointPx::new(r.x1() + p.x.div_euclid(s), r.y1() + p.y.div_euclid(s))
}

fn local_rect(img: &AgentImage<'_>) -> RectPx {
    img.size().rect()
}

/// Squared distance from `p` to the nearest pixel of `r`.
fn distance_sq_to(r: &RectPx, p: PointPx) -> i64 {
    r.clamp_point(p).distance_sq(p)
}

/// With probability `p`, a uniformly random option other than `best`.
fn noisy_choice(rng: &mut ChaCha8Rng, best: usize, count: usize, p: f64) -> usize {
    if count < 2 || p <= 0.0 || !rng.gen_bool(p) {
        return best;
    }
    let other = rng.gen_range(0..count - 1);
    if other >= best {
        other + 1
    } else {
        other
    }
}

/// Picks `best` unless a competitor misleads; option `i` does so
/// independently with probability `p[i]`, so more options mean more errors.
fn contested_choice(rng: &mut ChaCha8Rng, best: usize, p: &[f64]) -> usize {
    let misleading: Vec<usize> = (0..p.len())
        .filter(|&i| i != best)
        .filter(|&i| p[i] > 0.0 && rng.gen_bool(p[i].min(1.0)))
        .collect();
    if misleading.is_empty() {
        best
    } else {
        misleading[rng.gen_range(0..misleading.len())]
    }
}

impl OracleTruth {
    /// Where a perfect agent looking at `region` would aim: the target
    /// center when it is in view, else the middle of the part of the target
    /// that is visible.
    fn aim_in(&self, region: &RectPx) -> Option<PointPx> {
        let center = self.target.center();
        if region.contains(center) {
            return Some(center);
        }
        self.target.to_rect().intersection(region).map(|r| r.center())
    }
}

#[derive(Debug, Clone)]
pub struct OracleScanner {
    config: OracleConfig,
    truth: OracleTruth,
}

impl OracleScanner {
    pub fn new(config: OracleConfig, truth: OracleTruth) -> Self {
        Self { config, truth }
    }

    fn rng(&self, site: &str, images: &[AgentImage<'_>], extra: &[u8]) -> ChaCha8Rng {
        let frames: Vec<_> = images.iter().map(|i| (i.region(), i.scale())).collect();
        call_rng(self.config.seed, &self.truth.task_key, site, &frames, extra)
    }

    fn shows_distractor(&self, r: &RectPx) -> bool {
        self.truth.distractors.iter().any(|d| d.intersects(r))
    }

    fn select(&self, images: &[AgentImage<'_>]) -> Result<String, AgentError> {
        let view = images.first().ok_or(AgentError::UnrecognizedPrompt)?;
        let tiles = match partition_grid(view.region(), GridSpec::THREE_BY_THREE) {
            Ok(t) => t,
            Err(_) => return Ok("The region is too small to divide further.".into()),
        };
        let mut rng = self.rng("select", images, &[]);
        let mut out = String::new();
        for (i, tile) in tiles.iter().enumerate() {
            let (base, why) = if self.truth.target.intersects(tile) {
                (90.0, "contains the requested control")
            } else if self.shows_distractor(tile) {
                (self.config.distractor_score as f64, "has a similar-looking control")
            } else {
                (10.0, "unrelated content")
            };
            let score = (base + gaussian(&mut rng, self.config.scanner_score_noise))
                .round()
                .clamp(0.0, 100.0);
            let _ = writeln!(out, "Region {}: {} ({})", i + 1, score as i64, why);
        }
        Ok(out)
    }

    fn verify(&self, images: &[AgentImage<'_>], tag: &str, site: &str) -> Result<String, AgentError> {
        let crop = images.last().ok_or(AgentError::UnrecognizedPrompt)?;
        let mut rng = self.rng(site, images, &[]);
        let region = crop.region();
        let mut yes = if self.truth.target.intersects(&region) {
            true
        } else if self.shows_distractor(&region) {
            rng.gen_bool(self.config.distractor_confusion)
        } else {
            false
        };
        if self.config.scanner_flip_prob > 0.0 && rng.gen_bool(self.config.scanner_flip_prob) {
            yes = !yes;
        }
        let word = if yes { "yes" } else { "no" };
        Ok(format!(
            "<reasoning>Inspected the cropped region for the requested control.</reasoning>\n<{tag}>{word}</{tag}>"
        ))
    }

    fn consensus(&self, images: &[AgentImage<'_>]) -> Result<String, AgentError> {
        if images.is_empty() {
            return Err(AgentError::UnrecognizedPrompt);
        }
        let target = self.truth.target.center();
        let best = images
            .iter()
            .enumerate()
            .min_by_key(|(i, img)| (distance_sq_to(&img.region(), target), *i))
            .map(|(i, _)| i)
            .unwrap();
        let mut rng = self.rng("consensus", images, &[]);
        // Look-alikes mislead as often as they fool verification.
        let p: Vec<f64> = images
            .iter()
            .map(|img| {
                if self.shows_distractor(&img.region()) {
                    self.config.distractor_confusion.max(self.config.scanner_flip_prob)
                } else {
                    self.config.scanner_flip_prob
                }
            })
            .collect();
        let pick = contested_choice(&mut rng, best, &p);
        Ok(format!(
            "Candidate {} matches the instruction best.\n<candidate>{}</candidate>",
            pick + 1,
            pick + 1
        ))
    }

    fn enhance(&self, images: &[AgentImage<'_>]) -> Result<String, AgentError> {
        let view = images.first().ok_or(AgentError::UnrecognizedPrompt)?;
        let frame = local_rect(view);
        let cells = match partition_grid(frame, GridSpec::FIVE_BY_FIVE) {
            Ok(c) => c,
            Err(_) => return Ok("The region is too small.".into()),
        };
        let aim = self.truth.aim_in(&view.region()).unwrap_or(self.truth.target.center());
        let target = frame.clamp_point(to_view(aim, view));
        let cell = cells.iter().position(|c| c.contains(target)).unwrap_or(12);
        let zone = zone_of(cells[cell], target)
            .ok()
            .flatten()
            .unwrap_or(ZoneId::Center);
        let mut rng = self.rng("enhance", images, &[]);
        let cell = noisy_choice(&mut rng, cell, cells.len(), self.config.scanner_flip_prob);
        let zone = ZoneId::ALL[noisy_choice(&mut rng, zone as usize, 9, self.config.scanner_flip_prob)];
        Ok(format!(
            "The control sits in region {}.\n<index>{}</index>\n<location>{}</location>",
            cell + 1,
            cell + 1,
            zone
        ))
    }

    fn decide(&self, prompt: &str, images: &[AgentImage<'_>]) -> Result<String, AgentError> {
        static POINTS: OnceLock<Regex> = OnceLock::new();
        let re = POINTS.get_or_init(|| {
            Regex::new(r"Point A \((-?\d+), (-?\d+)\) and Point B \((-?\d+), (-?\d+)\)").unwrap()
        });
        let view = images.first().ok_or(AgentError::UnrecognizedPrompt)?;
        let cap = re.captures(prompt).ok_or(AgentError::UnrecognizedPrompt)?;
        let n = |i: usize| cap[i].parse::<i64>().unwrap_or(0);
        let options = [PointPx::new(n(1), n(2)), PointPx::new(n(3), n(4))];
        let target = self.truth.target;
        let score = |p: PointPx| {
            let g = from_view(p, view);
            (!target.contains(g), g.distance_sq(target.center()))
        };
        let best = if score(options[1]) < score(options[0]) { 1 } else { 0 };
        let mut rng = self.rng("decide", images, prompt.as_bytes());
        let pick = noisy_choice(&mut rng, best, 2, self.config.scanner_flip_prob);
        let p = options[pick];
        Ok(format!("({}, {})", p.x, p.y))
    }
}

impl ScannerAgent for OracleScanner {
    fn complete(&self, prompt: &str, images: &[AgentImage<'_>]) -> Result<String, AgentError> {
        if prompt.contains(markers::SELECTION) {
            self.select(images)
        } else if prompt.contains(markers::CROSSMODAL_VERIFY) {
            self.verify(images, "relevance", "crossmodal")
        } else if prompt.contains(markers::REGION_VERIFY) {
            self.verify(images, "answer", "region")
        } else if prompt.contains(markers::CONSENSUS) {
            self.consensus(images)
        } else if prompt.contains(markers::ENHANCE) {
            self.enhance(images)
        } else if prompt.contains(markers::DECIDE) {
            self.decide(prompt, images)
        } else {
            Err(AgentError::UnrecognizedPrompt)
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleLocator {
    config: OracleConfig,
    truth: OracleTruth,
}

impl OracleLocator {
    pub fn new(config: OracleConfig, truth: OracleTruth) -> Self {
        Self { config, truth }
    }
}

impl LocatorAgent for OracleLocator {
    /// Aims at the target when any of it is in view, otherwise at the nearest
    /// look-alike in view; with `locator_miss_prob`, or when nothing
    /// relevant is visible, at a uniform decoy.
    fn ground(&self, _instruction: &str, image: &AgentImage<'_>) -> Result<PointPx, AgentError> {
        let frame = local_rect(image);
        let mut rng = call_rng(
            self.config.seed,
            &self.truth.task_key,
            "ground",
            &[(image.region(), image.scale())],
            &[],
        );
        let miss = self.config.locator_miss_prob > 0.0 && rng.gen_bool(self.config.locator_miss_prob);
        let region = image.region();
        let aim = if let Some(aim) = self.truth.aim_in(&region) {
            Some(aim)
        } else {
            self.truth
                .distractors
                .iter()
                .map(BoxClosed::center)
                .filter(|c| region.contains(*c))
                .min_by_key(|c| c.distance_sq(self.truth.target.center()))
        };
        let point = match aim {
            Some(aim) if !miss => {
                let local = to_view(aim, image);
                let longer = frame.width().max(frame.height()) as f64;
                let sigma = self.config.locator_sigma + self.config.locator_sigma_rel * longer;
                let dx = gaussian(&mut rng, sigma).round() as i64;
                let dy = gaussian(&mut rng, sigma).round() as i64;
                PointPx::new(local.x + dx, local.y + dy)
            }
            _ => PointPx::new(
                rng.gen_range(0..frame.width()),
                rng.gen_range(0..frame.height()),
            ),
        };
        Ok(frame.clamp_point(point))
    }
}
