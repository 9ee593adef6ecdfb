use thiserror::Error;

use super::{PromptKind, Stage};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("missing template field `{0}`")]
    MissingField(&'static str),
    #[error("template `{template}` references unknown placeholder `{placeholder}`")]
    UnknownPlaceholder {
        template: &'static str,
        placeholder: String,
    },
}

/// Values substituted into a template. Only the fields a template names are
/// required.
#[derive(Debug, Clone, Default)]
pub struct PromptContext {
    pub instruction: String,
    pub application_name: Option<String>,
    pub system_name: Option<String>,
    pub depth: u32,
    pub candidate_count: Option<usize>,
    pub point_a: Option<(i64, i64)>,
    pub point_b: Option<(i64, i64)>,
}

impl PromptContext {
    pub fn new(instruction: impl Into<String>) -> Self {
        Self {
            instruction: instruction.into(),
            ..Self::default()
        }
    }

    pub fn application(mut self, name: impl Into<String>) -> Self {
        self.application_name = Some(name.into());
        self
    }

    pub fn system(mut self, name: impl Into<String>) -> Self {
        self.system_name = Some(name.into());
        self
    }
}

macro_rules! templates {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/templates/", $name, ".txt")))),*]
    };
}

static TEMPLATES: &[(&str, &str)] = templates![
    "selection_initial_normal",
    "selection_initial_special",
    "selection_deeper_normal",
    "selection_deeper_special",
    "region_verify_normal",
    "region_verify_special",
    "crossmodal_verify_normal",
    "crossmodal_verify_special",
    "consensus_select_normal",
    "consensus_select_special",
    "resolution_enhance_normal",
    "resolution_enhance_special",
    "final_decide_normal",
    "final_decide_special",
    "locator_os_atlas",
    "locator_uground",
    "locator_uground_v1",
    "baseline_ground",
];

/// Raw template text with placeholders intact.
pub fn template_text(kind: PromptKind) -> &'static str {
    let name = kind.template_name();
    let raw = TEMPLATES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .expect("every prompt kind has a shipped template");
    raw.strip_suffix('\n').unwrap_or(raw)
}

fn fmt_point(p: Option<(i64, i64)>, field: &'static str) -> Result<String, RenderError> {
    p.map(|(x, y)| format!("({x}, {y})"))
        .ok_or(RenderError::MissingField(field))
}

fn lookup(ctx: &PromptContext, placeholder: &str, template: &'static str) -> Result<String, RenderError> {
    let required = |v: &Option<String>, field: &'static str| {
        v.as_deref()
            .filter(|s| !s.trim().is_empty())
            .map(str::to_owned)
            .ok_or(RenderError::MissingField(field))
    };
    match placeholder {
        "instruction" => {
            if ctx.instruction.trim().is_empty() {
                Err(RenderError::MissingField("instruction"))
            } else {
                Ok(ctx.instruction.clone())
            }
        }
        "application" | "application_name" => required(&ctx.application_name, "application_name"),
        "system_name" => required(&ctx.system_name, "system_name"),
        "candidate_count" => ctx
            .candidate_count
            .map(|n| n.to_string())
            .ok_or(RenderError::MissingField("candidate_count")),
        "point_a" => fmt_point(ctx.point_a, "point_a"),
        "point_b" => fmt_point(ctx.point_b, "point_b"),
        other => Err(RenderError::UnknownPlaceholder {
            template,
            placeholder: other.to_string(),
        }),
    }
}

/// Instantiates the template for `kind`. Selection prompts at depth 0 always
/// use the initial-level template, which frames the whole screenshot.
pub fn render_prompt(kind: PromptKind, ctx: &PromptContext) -> Result<String, RenderError> {
    let kind = match kind.stage {
        Stage::SelectionInitial if ctx.depth > 0 => PromptKind::new(Stage::SelectionDeeper, kind.variant),
        _ => kind,
    };
    if ctx.instruction.trim().is_empty() {
        return Err(RenderError::MissingField("instruction"));
    }
    let name = kind.template_name();
    let text = template_text(kind);
    let mut out = String::with_capacity(text.len() + ctx.instruction.len() * 2);
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if is_placeholder(&after[..close]) => {
                out.push_str(&lookup(ctx, &after[..close], name)?);
                rest = &after[close + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

fn is_placeholder(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_lowercase() || b == b'_')
}

#[cfg(test)]
mod tests {
    use super::super::{LocatorStyle, Variant};
    use super::*;

    fn ctx() -> PromptContext {
        PromptContext::new("Bold the title")
            .application("powerpoint")
            .system("windows")
    }

    #[test]
    fn initial_selection_frames_the_screenshot() {
        let text = render_prompt(PromptKind::new(Stage::SelectionInitial, Variant::Normal), &ctx()).unwrap();
        assert!(text.starts_with(
            "I have provided you a screenshot of my desktop containing the interface of the powerpoint application"
        ));
        assert!(text.contains("**Bold the title**"));
    }

    #[test]
    fn deeper_special_selection_drops_framing() {
        let mut c = ctx();
        c.depth = 2;
        let text = render_prompt(PromptKind::new(Stage::SelectionInitial, Variant::Special), &c).unwrap();
        assert!(text.starts_with(
            "Where should I click if I want to DIRECTLY perform the following operation: **Bold the title**?"
        ));
    }

    #[test]
    fn empty_instruction_is_rejected() {
        let mut c = ctx();
        c.instruction = "  ".into();
        let err = render_prompt(PromptKind::new(Stage::RegionVerify, Variant::Normal), &c).unwrap_err();
        assert_eq!(err, RenderError::MissingField("instruction"));
    }

    #[test]
    fn missing_field_is_named() {
        let c = PromptContext::new("Open file");
        let err = render_prompt(PromptKind::new(Stage::SelectionInitial, Variant::Normal), &c).unwrap_err();
        assert_eq!(err, RenderError::MissingField("application_name"));
        let err = render_prompt(PromptKind::new(Stage::FinalDecide, Variant::Special), &c).unwrap_err();
        assert_eq!(err, RenderError::MissingField("point_a"));
    }

    #[test]
    fn special_variants_need_no_application_where_template_omits_it() {
        let c = PromptContext::new("Open file");
        for stage in [Stage::RegionVerify, Stage::CrossmodalVerify, Stage::ResolutionEnhance] {
            render_prompt(PromptKind::new(stage, Variant::Special), &c).unwrap();
        }
        render_prompt(
            PromptKind::new(Stage::LocatorGround(LocatorStyle::UGroundV1), Variant::Normal),
            &c,
        )
        .unwrap();
    }

    #[test]
    fn braces_in_instruction_are_not_reexpanded() {
        let c = PromptContext::new("type {instruction} literally");
        let text = render_prompt(PromptKind::new(Stage::RegionVerify, Variant::Special), &c).unwrap();
        assert!(text.contains("**type {instruction} literally**"));
    }

    #[test]
    fn every_template_uses_known_placeholders() {
        let mut c = ctx();
        c.candidate_count = Some(3);
        c.point_a = Some((1, 2));
        c.point_b = Some((3, 4));
        for (name, _) in TEMPLATES {
            let kind = all_kinds().into_iter().find(|k| k.template_name() == *name).unwrap();
            let text = render_prompt(kind, &c).unwrap();
            assert!(!text.contains("{instruction}"), "{name}");
        }
    }

    fn all_kinds() -> Vec<PromptKind> {
        let stages = [
            Stage::SelectionInitial,
            Stage::SelectionDeeper,
            Stage::RegionVerify,
            Stage::CrossmodalVerify,
            Stage::ConsensusSelect,
            Stage::ResolutionEnhance,
            Stage::FinalDecide,
            Stage::LocatorGround(LocatorStyle::OsAtlas),
            Stage::LocatorGround(LocatorStyle::UGround),
            Stage::LocatorGround(LocatorStyle::UGroundV1),
            Stage::BaselineGround,
        ];
        stages
            .into_iter()
            .flat_map(|s| [PromptKind::new(s, Variant::Normal), PromptKind::new(s, Variant::Special)])
            .collect()
    }
}
