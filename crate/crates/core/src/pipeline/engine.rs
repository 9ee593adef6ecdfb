use crate::agents::{AgentImage, LocatorAgent, ScannerAgent, Screen};
use crate::geometry::{
    crop_centered, partition_grid, scale_point_down, to_global, zone_center, ImageSize, PointPx, RectPx,
};
use crate::protocol::{
    parse_candidate_index, parse_index_location, parse_point, parse_region_scores, parse_tagged_yes_no,
    render_prompt, PromptContext, PromptKind, RegionScores, Stage, VerdictTag,
};

use super::{
    CallCounts, CandidateCrop, FallbackLevel, GroundingResult, ImageRef, PipelineConfig, PipelineStage,
    SearchNode, TaskContext, TraceEvent, Verdict, VerifyPrompt,
};

/// Runs all five stages for one task. Never panics on agent misbehavior:
/// every failure degrades to a recorded fallback.
pub fn run(
    screen: &dyn Screen,
    task: &TaskContext,
    config: &PipelineConfig,
    scanner: &dyn ScannerAgent,
    locator: &dyn LocatorAgent,
) -> GroundingResult {
    let run = Run {
        screen,
        size: screen.size(),
        task,
        config,
        scanner,
        locator,
        trace: Vec::new(),
        counts: CallCounts::default(),
        explored: Vec::new(),
        candidates: Vec::new(),
        level: FallbackLevel::FullPipeline,
        budget_flagged: false,
    };
    run.execute()
}

enum CallFailure {
    Budget,
    Agent,
}

struct Run<'a> {
    screen: &'a dyn Screen,
    size: ImageSize,
    task: &'a TaskContext,
    config: &'a PipelineConfig,
    scanner: &'a dyn ScannerAgent,
    locator: &'a dyn LocatorAgent,
    trace: Vec<TraceEvent>,
    counts: CallCounts,
    explored: Vec<SearchNode>,
    candidates: Vec<CandidateCrop>,
    level: FallbackLevel,
    budget_flagged: bool,
}

fn image_ref(img: &AgentImage<'_>) -> ImageRef {
    ImageRef {
        region: img.region(),
        scale: img.scale(),
    }
}

fn local_frame(img: &AgentImage<'_>) -> RectPx {
    img.size().rect()
}

impl<'a> Run<'a> {
    fn execute(mut self) -> GroundingResult {
        if let Err(e) = self.config.validate() {
            self.fallback(PipelineStage::Allocate, e.to_string());
            return self.finish_center(None, None, None);
        }
        let Some(frontier) = self.allocate() else {
            return self.finish_center(None, None, None);
        };
        self.refine(frontier);
        let Some(chosen) = self.consensus() else {
            return self.finish_center(None, None, None);
        };
        self.enhance(chosen)
    }

    fn degrade(&mut self, level: FallbackLevel) {
        self.level = self.level.max(level);
    }

    fn fallback(&mut self, stage: PipelineStage, reason: impl Into<String>) {
        self.trace.push(TraceEvent::Fallback {
            stage,
            reason: reason.into(),
        });
    }

    fn prompt(&mut self, stage: PipelineStage, kind: PromptKind, ctx: PromptContext) -> Option<String> {
        let ctx = PromptContext {
            application_name: Some(self.task.application_name.clone()),
            system_name: Some(self.task.system_name.clone()),
            ..ctx
        };
        match render_prompt(kind, &ctx) {
            Ok(p) => Some(p),
            Err(e) => {
                self.fallback(stage, format!("prompt rendering failed: {e}"));
                None
            }
        }
    }

    fn budget_left(&self) -> bool {
        self.counts.scanner < self.config.max_scanner_calls
    }

    fn ask(&mut self, stage: PipelineStage, prompt: &str, images: &[AgentImage<'_>]) -> Result<String, CallFailure> {
        if !self.budget_left() {
            if !self.budget_flagged {
                self.budget_flagged = true;
                self.trace.push(TraceEvent::BudgetExhausted {
                    stage,
                    limit: format!("max_scanner_calls={}", self.config.max_scanner_calls),
                });
            }
            return Err(CallFailure::Budget);
        }
        self.counts.scanner += 1;
        let reply = self.scanner.complete(prompt, images);
        self.trace.push(TraceEvent::ScannerCall {
            stage,
            call: self.counts.scanner,
            prompt: prompt.to_string(),
            images: images.iter().map(image_ref).collect(),
            reply: reply.as_ref().map(Clone::clone).map_err(ToString::to_string),
        });
        reply.map_err(|_| CallFailure::Agent)
    }

    /// Locator point in `img`'s local frame, clamped to it.
    fn ground(&mut self, stage: PipelineStage, img: &AgentImage<'_>) -> Option<PointPx> {
        self.counts.locator += 1;
        let reply = self
            .locator
            .ground(&self.task.instruction, img)
            .map(|p| local_frame(img).clamp_point(p));
        self.trace.push(TraceEvent::LocatorCall {
            stage,
            call: self.counts.locator,
            image: image_ref(img),
            reply: reply.as_ref().copied().map_err(ToString::to_string),
        });
        reply.ok()
    }

    fn scores(&mut self, stage: PipelineStage, reply: &str) -> Option<RegionScores> {
        match parse_region_scores(reply) {
            Ok(parsed) => {
                if !parsed.warnings.is_empty() {
                    self.trace.push(TraceEvent::ParseWarnings {
                        stage,
                        warnings: parsed.warnings,
                    });
                }
                Some(parsed.value)
            }
            Err(e) => {
                self.trace.push(TraceEvent::ParseFailure {
                    stage,
                    error: e.to_string(),
                });
                None
            }
        }
    }

    /// Top-k children of `parent` as nodes, best first.
    fn select_children(&mut self, parent: &SearchNode, tiles: &[RectPx], scores: &RegionScores) -> Vec<SearchNode> {
        let selected: Vec<u8> = scores.ranked().into_iter().take(self.config.top_k).collect();
        self.trace.push(TraceEvent::NodeScored {
            rect: parent.rect,
            depth: parent.depth,
            scores: scores.iter().map(|(_, s)| s).collect(),
            selected: selected.clone(),
        });
        selected
            .iter()
            .map(|&i| SearchNode {
                rect: tiles[i as usize - 1],
                depth: parent.depth + 1,
                score: scores.get(i),
                path: parent.path.iter().copied().chain([i]).collect(),
            })
            .collect()
    }

    // Stage 1.
    fn allocate(&mut self) -> Option<Vec<SearchNode>> {
        let root = SearchNode {
            rect: self.size.rect(),
            depth: 0,
            score: 100,
            path: Vec::new(),
        };
        let tiles = match partition_grid(root.rect, self.config.coarse_grid) {
            Ok(t) => t,
            Err(e) => {
                self.fallback(PipelineStage::Allocate, e.to_string());
                return None;
            }
        };
        let kind = PromptKind::new(Stage::SelectionInitial, self.task.variant);
        let prompt = self.prompt(PipelineStage::Allocate, kind, PromptContext::new(&self.task.instruction))?;
        let full = AgentImage::full(self.screen);
        for _ in 0..=self.config.selection_retries {
            match self.ask(PipelineStage::Allocate, &prompt, &[full]) {
                Ok(reply) => {
                    if let Some(scores) = self.scores(PipelineStage::Allocate, &reply) {
                        return Some(self.select_children(&root, &tiles, &scores));
                    }
                }
                Err(CallFailure::Budget) => {
                    self.fallback(PipelineStage::Allocate, "no scanner budget for the first selection");
                    return None;
                }
                Err(CallFailure::Agent) => {}
            }
        }
        self.fallback(
            PipelineStage::Allocate,
            "selection unusable after retries; all regions enter the frontier with score 0",
        );
        Some(
            tiles
                .iter()
                .enumerate()
                .map(|(i, &rect)| SearchNode {
                    rect,
                    depth: 1,
                    score: 0,
                    path: vec![i as u8 + 1],
                })
                .collect(),
        )
    }

    fn is_leaf(&self, node: &SearchNode) -> bool {
        let t = self.config.stop_threshold_px as i64;
        node.rect.width() < t || node.rect.height() < t || node.depth >= self.config.max_depth
    }

    // Stage 2, with stage 3 run on each leaf as it is emitted.
    fn refine(&mut self, frontier: Vec<SearchNode>) {
        let mut stack: Vec<SearchNode> = frontier.into_iter().rev().collect();
        while let Some(node) = stack.pop() {
            if self.candidates.len() >= self.config.max_candidates {
                self.trace.push(TraceEvent::BudgetExhausted {
                    stage: PipelineStage::Refine,
                    limit: format!("max_candidates={}", self.config.max_candidates),
                });
                break;
            }
            self.explored.push(node.clone());
            if self.is_leaf(&node) {
                self.verify_leaf(&node);
                continue;
            }
            let tiles = match partition_grid(node.rect, self.config.coarse_grid) {
                Ok(t) => t,
                Err(_) => {
                    self.verify_leaf(&node);
                    continue;
                }
            };
            let kind = PromptKind::new(Stage::selection(node.depth), self.task.variant);
            let ctx = PromptContext {
                depth: node.depth,
                ..PromptContext::new(&self.task.instruction)
            };
            let Some(prompt) = self.prompt(PipelineStage::Refine, kind, ctx) else {
                self.verify_leaf(&node);
                continue;
            };
            let view = AgentImage::view(self.screen, node.rect, 1);
            match self.ask(PipelineStage::Refine, &prompt, &[view]) {
                Ok(reply) => match self.scores(PipelineStage::Refine, &reply) {
                    Some(scores) => {
                        let children = self.select_children(&node, &tiles, &scores);
                        stack.extend(children.into_iter().rev());
                    }
                    None => {
                        self.fallback(PipelineStage::Refine, "unparseable region scores; node kept as leaf");
                        self.verify_leaf(&node);
                    }
                },
                Err(CallFailure::Agent) => {
                    self.fallback(PipelineStage::Refine, "scanner error; node kept as leaf");
                    self.verify_leaf(&node);
                }
                Err(CallFailure::Budget) => {
                    self.verify_leaf(&node);
                    break;
                }
            }
        }
    }

    // Stage 3.
    fn verify_leaf(&mut self, leaf: &SearchNode) {
        self.trace.push(TraceEvent::LeafEmitted {
            rect: leaf.rect,
            depth: leaf.depth,
            score: leaf.score,
        });
        let view = AgentImage::view(self.screen, leaf.rect, 1);
        let Some(local) = self.ground(PipelineStage::Verify, &view) else {
            self.fallback(PipelineStage::Verify, "locator failed; leaf skipped");
            return;
        };
        let Ok(point) = to_global(local, leaf.rect) else {
            return;
        };
        let crop = crop_centered(point, self.config.crop_side_px, self.size);
        let verdict = if self.config.verification && self.budget_left() {
            self.verify_crop(crop)
        } else {
            Verdict::Unchecked
        };
        let index = self.candidates.len();
        self.trace.push(TraceEvent::CandidateAdded {
            index,
            crop,
            locator_point: point,
            verdict,
        });
        self.candidates.push(CandidateCrop {
            crop,
            locator_point: point,
            verdict,
            region_score: leaf.score,
            path: leaf.path.clone(),
        });
    }

    fn verify_crop(&mut self, crop: RectPx) -> Verdict {
        let (stage, tag) = match self.config.verify_prompt {
            VerifyPrompt::CrossModal => (Stage::CrossmodalVerify, VerdictTag::Relevance),
            VerifyPrompt::RegionOnly => (Stage::RegionVerify, VerdictTag::Answer),
        };
        let kind = PromptKind::new(stage, self.task.variant);
        let Some(prompt) = self.prompt(PipelineStage::Verify, kind, PromptContext::new(&self.task.instruction)) else {
            return Verdict::Unchecked;
        };
        let crop_img = AgentImage::view(self.screen, crop, 1);
        let reply = match self.config.verify_prompt {
            VerifyPrompt::CrossModal => self.ask(PipelineStage::Verify, &prompt, &[AgentImage::full(self.screen), crop_img]),
            VerifyPrompt::RegionOnly => self.ask(PipelineStage::Verify, &prompt, &[crop_img]),
        };
        let Ok(reply) = reply else {
            return Verdict::Unchecked;
        };
        let parsed = parse_tagged_yes_no(&reply, tag);
        if !parsed.warnings.is_empty() {
            self.trace.push(TraceEvent::ParseWarnings {
                stage: PipelineStage::Verify,
                warnings: parsed.warnings,
            });
        }
        if parsed.value.value {
            Verdict::Accepted
        } else {
            Verdict::Rejected
        }
    }

    /// Candidate index with the highest region score; ties to the earliest.
    fn best_scored(&self, eligible: &[usize]) -> usize {
        let mut best = eligible[0];
        for &i in eligible {
            if self.candidates[i].region_score > self.candidates[best].region_score {
                best = i;
            }
        }
        best
    }

    fn choose(&mut self, index: usize, eligible: Vec<usize>, by: &str) -> Option<CandidateCrop> {
        self.trace.push(TraceEvent::CandidateChosen {
            index,
            eligible,
            by: by.to_string(),
        });
        Some(self.candidates[index].clone())
    }

    // Stage 4.
    fn consensus(&mut self) -> Option<CandidateCrop> {
        if self.candidates.is_empty() {
            self.fallback(PipelineStage::Consensus, "no candidates");
            return None;
        }
        let mut eligible: Vec<usize> = (0..self.candidates.len())
            .filter(|&i| self.candidates[i].verdict == Verdict::Accepted)
            .collect();
        if eligible.is_empty() {
            if self.config.verification {
                self.fallback(PipelineStage::Consensus, "no accepted candidates; all candidates eligible");
            }
            eligible = (0..self.candidates.len()).collect();
        }
        if eligible.len() == 1 {
            return self.choose(eligible[0], eligible, "single");
        }
        if !self.config.consensus {
            let best = self.best_scored(&eligible);
            return self.choose(best, eligible, "highest_score");
        }
        let kind = PromptKind::new(Stage::ConsensusSelect, self.task.variant);
        let ctx = PromptContext {
            candidate_count: Some(eligible.len()),
            ..PromptContext::new(&self.task.instruction)
        };
        let picked = self.prompt(PipelineStage::Consensus, kind, ctx).and_then(|prompt| {
            let images: Vec<AgentImage<'_>> = eligible
                .iter()
                .map(|&i| AgentImage::view(self.screen, self.candidates[i].crop, 1))
                .collect();
            let reply = self.ask(PipelineStage::Consensus, &prompt, &images).ok()?;
            match parse_candidate_index(&reply, eligible.len()) {
                Ok(n) => Some(eligible[n - 1]),
                Err(e) => {
                    self.trace.push(TraceEvent::ParseFailure {
                        stage: PipelineStage::Consensus,
                        error: e.to_string(),
                    });
                    None
                }
            }
        });
        match picked {
            Some(i) => self.choose(i, eligible, "scanner"),
            None => {
                self.fallback(PipelineStage::Consensus, "no usable pick; highest-scored region wins");
                self.degrade(FallbackLevel::ConsensusSkipped);
                let best = self.best_scored(&eligible);
                self.choose(best, eligible, "highest_score")
            }
        }
    }

    // Stage 5.
    fn enhance(mut self, chosen: CandidateCrop) -> GroundingResult {
        if !self.config.enhancement {
            let p = chosen.locator_point;
            self.trace.push(TraceEvent::Points {
                p_scanner: None,
                p_locator: Some(p),
            });
            return self.finish(p, None, Some(p), Some(chosen));
        }
        let factor = self.config.upscale_factor;
        let up = AgentImage::view(self.screen, chosen.crop, factor);
        self.trace.push(TraceEvent::Resampled {
            region: chosen.crop,
            factor,
            method: "nearest".into(),
        });

        let scanner_local = self.scanner_point(&up);
        let locator_local = self.ground(PipelineStage::Enhance, &up);
        let global = |p: PointPx| {
            scale_point_down(p, factor)
                .and_then(|p| to_global(p, chosen.crop))
                .ok()
                .map(|p| chosen.crop.clamp_point(p))
        };
        let p_scanner = scanner_local.and_then(global);
        let p_locator = locator_local.and_then(global);
        self.trace.push(TraceEvent::Points { p_scanner, p_locator });

        let final_point = match (scanner_local.zip(p_scanner), locator_local.zip(p_locator)) {
            (Some((a_local, a)), Some((b_local, b))) => {
                if a == b {
                    b
                } else {
                    self.decide(&up, a_local, b_local, a, b)
                }
            }
            (None, Some((_, b))) => {
                self.fallback(PipelineStage::Decide, "no scanner point; locator point used");
                self.degrade(FallbackLevel::LocatorOnly);
                b
            }
            (Some((_, a)), None) => {
                self.fallback(PipelineStage::Decide, "no locator point; scanner point used");
                self.degrade(FallbackLevel::LocatorOnly);
                a
            }
            (None, None) => {
                self.fallback(PipelineStage::Decide, "no point from either agent; crop center used");
                return self.finish_center(Some(chosen), None, None);
            }
        };
        self.finish(final_point, p_scanner, p_locator, Some(chosen))
    }

    /// Zone center chosen by the scanner, in the magnified frame.
    fn scanner_point(&mut self, up: &AgentImage<'_>) -> Option<PointPx> {
        let kind = PromptKind::new(Stage::ResolutionEnhance, self.task.variant);
        let prompt = self.prompt(PipelineStage::Enhance, kind, PromptContext::new(&self.task.instruction))?;
        let reply = self.ask(PipelineStage::Enhance, &prompt, &[*up]).ok()?;
        let choice = match parse_index_location(&reply) {
            Ok(c) => c,
            Err(e) => {
                self.trace.push(TraceEvent::ParseFailure {
                    stage: PipelineStage::Enhance,
                    error: e.to_string(),
                });
                return None;
            }
        };
        let cells = partition_grid(local_frame(up), self.config.enhance_grid).ok()?;
        let cell = *cells.get(choice.index as usize - 1)?;
        zone_center(cell, choice.zone).ok()
    }

    /// Points A (scanner) and B (locator) go to the scanner in the magnified
    /// frame. The reply is snapped to the nearer point; ties and unusable
    /// replies go to the locator.
    fn decide(&mut self, up: &AgentImage<'_>, a_local: PointPx, b_local: PointPx, a: PointPx, b: PointPx) -> PointPx {
        let kind = PromptKind::new(Stage::FinalDecide, self.task.variant);
        let ctx = PromptContext {
            point_a: Some((a_local.x, a_local.y)),
            point_b: Some((b_local.x, b_local.y)),
            ..PromptContext::new(&self.task.instruction)
        };
        let reply = self
            .prompt(PipelineStage::Decide, kind, ctx)
            .and_then(|prompt| self.ask(PipelineStage::Decide, &prompt, &[*up]).ok());
        let Some(reply) = reply else {
            self.fallback(PipelineStage::Decide, "no decision; locator point used");
            self.degrade(FallbackLevel::LocatorOnly);
            return b;
        };
        match parse_point(&reply) {
            Ok(parsed) => {
                let p = parsed.value;
                if p.distance_sq(a_local) < p.distance_sq(b_local) {
                    a
                } else {
                    b
                }
            }
            Err(e) => {
                self.trace.push(TraceEvent::ParseFailure {
                    stage: PipelineStage::Decide,
                    error: e.to_string(),
                });
                self.fallback(PipelineStage::Decide, "unparseable decision; locator point used");
                self.degrade(FallbackLevel::LocatorOnly);
                b
            }
        }
    }

    /// Center of the chosen crop, else of the best-scored explored region,
    /// else of the image.
    fn finish_center(
        mut self,
        chosen: Option<CandidateCrop>,
        p_scanner: Option<PointPx>,
        p_locator: Option<PointPx>,
    ) -> GroundingResult {
        self.degrade(FallbackLevel::CenterOfBestRegion);
        let region = chosen.as_ref().map(|c| c.crop).unwrap_or_else(|| {
            let mut best: Option<&SearchNode> = None;
            for n in &self.explored {
                if best.is_none_or(|b| n.score > b.score) {
                    best = Some(n);
                }
            }
            best.map_or(self.size.rect(), |n| n.rect)
        });
        self.finish(region.center(), p_scanner, p_locator, chosen)
    }

    fn finish(
        mut self,
        point: PointPx,
        p_scanner: Option<PointPx>,
        p_locator: Option<PointPx>,
        chosen: Option<CandidateCrop>,
    ) -> GroundingResult {
        let final_point = self.size.rect().clamp_point(point);
        self.trace.push(TraceEvent::Final {
            point: final_point,
            fallback_level: self.level,
        });
        GroundingResult {
            task_id: self.task.id.clone(),
            final_point,
            p_scanner,
            p_locator,
            chosen_candidate: chosen,
            candidates: self.candidates,
            explored: self.explored,
            call_counts: self.counts,
            fallback_level: self.level,
            trace: self.trace,
        }
    }
}
