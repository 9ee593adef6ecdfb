// Rendering agent prompts and reading structured fields back out of replies.

use groundscan::protocol::{
    parse_index_location, parse_point, parse_region_scores, parse_tagged_yes_no, render_prompt, PromptContext,
    PromptKind, Stage, Variant, VerdictTag,
};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let ctx = PromptContext::new("Bold the title").application("powerpoint").system("windows");
    let prompt = render_prompt(PromptKind::new(Stage::SelectionInitial, Variant::Normal), &ctx)?;
    println!("{prompt}\n");

    let scores = parse_region_scores("**Region 2: 90** (ribbon)\nRegion 5: 10 (canvas)")?;
    println!("ranked regions: {:?}", scores.value.ranked());
    println!("warnings: {:?}", scores.warnings);

    let verdict = parse_tagged_yes_no("<reasoning>the B button is visible</reasoning><relevance>yes</relevance>", VerdictTag::Relevance);
    println!("relevant: {} ({})", verdict.value.value, verdict.value.raw_reasoning);

    let choice = parse_index_location("<location>bottom-right</location>\n<index>7</index>")?;
    println!("cell {} zone {}", choice.index, choice.zone.label());

    let box_reply = parse_point("[100,200,140,240]")?;
    println!("point {:?} {:?}", box_reply.value, box_reply.warnings);
    Ok(())
}

fn main() {
    run_example().unwrap();
}
