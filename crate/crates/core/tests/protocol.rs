use std::path::PathBuf;

use groundscan::geometry::ZoneId;
use groundscan::protocol::{
    parse_candidate_index, parse_index_location, parse_point, parse_region_scores, parse_tagged_yes_no,
    render_prompt, LocatorStyle, PromptContext, PromptKind, Stage, Variant, VerdictTag,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn sample_context() -> PromptContext {
    PromptContext::new("Bold the title").application("powerpoint").system("windows")
}

const RENDERED: [(&str, Stage, Variant); 14] = [
    ("selection_initial_normal", Stage::SelectionInitial, Variant::Normal),
    ("selection_initial_special", Stage::SelectionInitial, Variant::Special),
    ("selection_deeper_normal", Stage::SelectionDeeper, Variant::Normal),
    ("selection_deeper_special", Stage::SelectionDeeper, Variant::Special),
    ("region_verify_normal", Stage::RegionVerify, Variant::Normal),
    ("region_verify_special", Stage::RegionVerify, Variant::Special),
    ("crossmodal_verify_normal", Stage::CrossmodalVerify, Variant::Normal),
    ("crossmodal_verify_special", Stage::CrossmodalVerify, Variant::Special),
    ("resolution_enhance_normal", Stage::ResolutionEnhance, Variant::Normal),
    ("resolution_enhance_special", Stage::ResolutionEnhance, Variant::Special),
    ("locator_os_atlas", Stage::LocatorGround(LocatorStyle::OsAtlas), Variant::Normal),
    ("locator_uground", Stage::LocatorGround(LocatorStyle::UGround), Variant::Normal),
    ("locator_uground_v1", Stage::LocatorGround(LocatorStyle::UGroundV1), Variant::Normal),
    ("baseline_ground", Stage::BaselineGround, Variant::Normal),
];

/// Compares every rendered template with its checked-in copy. Returns the
/// names that differ.
pub fn rendered_mismatches() -> Vec<String> {
    let ctx = sample_context();
    let mut bad = Vec::new();
    for (name, stage, variant) in RENDERED {
        let mut c = ctx.clone();
        c.depth = u32::from(stage == Stage::SelectionDeeper);
        let expected = std::fs::read_to_string(fixtures().join("rendered").join(format!("{name}.txt"))).unwrap();
        let got = render_prompt(PromptKind::new(stage, variant), &c).unwrap();
        if got != expected {
            bad.push(name.to_string());
        }
    }
    bad
}

#[test]
fn templates_render_byte_exact() {
    let bad = rendered_mismatches();
    assert!(bad.is_empty(), "mismatched: {bad:?}");
}

#[test]
fn deeper_levels_drop_the_screenshot_framing() {
    let mut c = sample_context();
    for variant in [Variant::Normal, Variant::Special] {
        c.depth = 0;
        let top = render_prompt(PromptKind::new(Stage::SelectionInitial, variant), &c).unwrap();
        c.depth = 1;
        let deep = render_prompt(PromptKind::new(Stage::SelectionInitial, variant), &c).unwrap();
        assert!(top.starts_with("I have provided you a screenshot"));
        assert!(deep.starts_with("Where should I click"));
    }
}

fn check_fixture(entry: &Value) -> Result<(), String> {
    let text = entry["text"].as_str().unwrap();
    let expect = &entry["expect"];
    let wants_error = expect["error"].as_bool().unwrap_or(false);
    match entry["kind"].as_str().unwrap() {
        "region_scores" => match parse_region_scores(text) {
            Err(_) if wants_error => Ok(()),
            Err(e) => Err(format!("unexpected error {e}")),
            Ok(_) if wants_error => Err("expected an error".into()),
            Ok(p) => {
                let got: Vec<u64> = (1..=9).map(|i| u64::from(p.value.get(i))).collect();
                let want: Vec<u64> = expect["scores"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
                let warn = expect["warn"].as_bool().unwrap();
                if got != want {
                    Err(format!("scores {got:?} != {want:?}"))
                } else if warn != !p.warnings.is_empty() {
                    Err(format!("warnings {:?}, expected warn={warn}", p.warnings))
                } else {
                    Ok(())
                }
            }
        },
        kind @ ("answer" | "relevance") => {
            let tag = if kind == "answer" { VerdictTag::Answer } else { VerdictTag::Relevance };
            let p = parse_tagged_yes_no(text, tag);
            let value = expect["value"].as_bool().unwrap();
            let warn = expect["warn"].as_bool().unwrap();
            if p.value.value != value || warn != !p.warnings.is_empty() {
                Err(format!("got {} with {:?}", p.value.value, p.warnings))
            } else {
                Ok(())
            }
        }
        "index_location" => match parse_index_location(text) {
            Err(_) if wants_error => Ok(()),
            Err(e) => Err(format!("unexpected error {e}")),
            Ok(c) if wants_error => Err(format!("expected an error, got {c:?}")),
            Ok(c) => {
                let zone: ZoneId = expect["zone"].as_str().unwrap().parse().unwrap();
                if u64::from(c.index) == expect["index"].as_u64().unwrap() && c.zone == zone {
                    Ok(())
                } else {
                    Err(format!("got {c:?}"))
                }
            }
        },
        "point" => match parse_point(text) {
            Err(_) if wants_error => Ok(()),
            Err(e) => Err(format!("unexpected error {e}")),
            Ok(p) if wants_error => Err(format!("expected an error, got {:?}", p.value)),
            Ok(p) => {
                let boxed = expect["box"].as_bool().unwrap();
                if p.value.x == expect["x"].as_i64().unwrap()
                    && p.value.y == expect["y"].as_i64().unwrap()
                    && boxed == !p.warnings.is_empty()
                {
                    Ok(())
                } else {
                    Err(format!("got {:?} {:?}", p.value, p.warnings))
                }
            }
        },
        "candidate" => {
            let count = entry["count"].as_u64().unwrap() as usize;
            match parse_candidate_index(text, count) {
                Err(_) if wants_error => Ok(()),
                Err(e) => Err(format!("unexpected error {e}")),
                Ok(i) if wants_error => Err(format!("expected an error, got {i}")),
                Ok(i) if i as u64 == expect["index"].as_u64().unwrap() => Ok(()),
                Ok(i) => Err(format!("got {i}")),
            }
        }
        other => Err(format!("unknown fixture kind {other}")),
    }
}

/// Runs the reply corpus. Returns (fixture count, failures).
pub fn reply_corpus() -> (usize, Vec<String>) {
    let text = std::fs::read_to_string(fixtures().join("replies.jsonl")).unwrap();
    let mut n = 0;
    let mut failures = Vec::new();
    for (line, raw) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        n += 1;
        let entry: Value = serde_json::from_str(raw).unwrap();
        if let Err(e) = check_fixture(&entry) {
            failures.push(format!("line {}: {:?}: {e}", line + 1, entry["text"].as_str().unwrap()));
        }
    }
    (n, failures)
}

#[test]
fn reply_corpus_extracts_as_labelled() {
    let (n, failures) = reply_corpus();
    assert!(n >= 50, "only {n} fixtures");
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

const FRAGMENTS: [&str; 24] = [
    "Region ", "region", ": ", "：", "**", "(", ")", "[", "]", ",", "<answer>", "</answer>", "<relevance>",
    "</relevance>", "<index>", "</index>", "<location>", "</location>", "<candidate>", "yes", "no", "top-left",
    "\n", "-",
];

fn fuzz_input(rng: &mut ChaCha8Rng) -> String {
    let mut s = String::new();
    for _ in 0..rng.gen_range(0..40) {
        match rng.gen_range(0..4) {
            0 => s.push_str(FRAGMENTS[rng.gen_range(0..FRAGMENTS.len())]),
            1 => s.push_str(&rng.gen_range(-1_000_000_000_000i64..1_000_000_000_000).to_string()),
            2 => s.push_str(&format!("{}.{}", rng.gen_range(0..1000), rng.gen_range(0..100))),
            _ => s.push(char::from_u32(rng.gen_range(0..0x11000)).unwrap_or('\u{fffd}')),
        }
    }
    s
}

/// Feeds `n` seeded random inputs to every parser and checks the output
/// invariants. Returns the number of invariant violations.
pub fn fuzz_parsers(n: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    for _ in 0..n {
        let s = fuzz_input(&mut rng);
        if let Ok(p) = parse_region_scores(&s) {
            if p.value.iter().count() != 9 || p.value.iter().any(|(_, v)| v > 100) {
                violations += 1;
            }
        }
        let _ = parse_tagged_yes_no(&s, VerdictTag::Answer);
        let _ = parse_tagged_yes_no(&s, VerdictTag::Relevance);
        if let Ok(c) = parse_index_location(&s) {
            if !(1..=25).contains(&c.index) {
                violations += 1;
            }
        }
        if let Ok(i) = parse_candidate_index(&s, 5) {
            if !(1..=5).contains(&i) {
                violations += 1;
            }
        }
        let _ = parse_point(&s);
    }
    violations
}

#[test]
fn parsers_survive_fuzzing() {
    assert_eq!(fuzz_parsers(10_000, 7), 0);
}

#[test]
fn well_formed_replies_round_trip() {
    let scores: Vec<u8> = vec![3, 14, 15, 92, 65, 35, 89, 79, 32];
    let reply: String = scores
        .iter()
        .enumerate()
        .map(|(i, s)| format!("Region {}: {s} (explanation)\n", i + 1))
        .collect();
    let p = parse_region_scores(&reply).unwrap();
    assert!(p.warnings.is_empty());
    assert_eq!((1..=9).map(|i| p.value.get(i)).collect::<Vec<_>>(), scores);

    for zone in ZoneId::ALL {
        for index in [1u8, 13, 25] {
            let reply = format!("reasoning\n\n<index>{index}</index>\n\n<location>{}</location>", zone.label());
            let c = parse_index_location(&reply).unwrap();
            assert_eq!((c.index, c.zone), (index, zone));
        }
    }
    for value in [true, false] {
        let word = if value { "yes" } else { "no" };
        let a = parse_tagged_yes_no(&format!("because.\n<answer>{word}</answer>"), VerdictTag::Answer);
        let r = parse_tagged_yes_no(
            &format!("<relevance>{word}</relevance>\n<reasoning>because</reasoning>"),
            VerdictTag::Relevance,
        );
        assert_eq!((a.value.value, r.value.value), (value, value));
        assert!(a.warnings.is_empty() && r.warnings.is_empty());
        assert_eq!(r.value.raw_reasoning, "because");
    }
    let p = parse_point("(1234, 567)").unwrap();
    assert_eq!((p.value.x, p.value.y), (1234, 567));
}
