use kneeoa_core::dataio::Split;
use kneeoa_core::eval::evaluate_grading;
use kneeoa_core::eval::report::grading_markdown;

use crate::context::{load_model, matrix, read_table, require_complete, require_split, write_json, write_text, CliResult, RunContext};
use crate::EvaluateArgs;

pub fn run(ctx: &RunContext, args: &EvaluateArgs) -> CliResult {
    let rows = read_table(&args.features.clone().unwrap_or_else(|| ctx.out_path("features.csv")))?;
    require_complete(&rows)?;
    let model = load_model(&args.model.clone().unwrap_or_else(|| ctx.out_path("model.json")))?;
    let split: Split = args.split.into();
    let (x, y) = matrix(&require_split(&rows, split)?);
    let probs = model.predict_proba_rows(&x)?;
    let report = evaluate_grading(
        split.as_str(),
        &y,
        &probs,
        model.params.class_count,
        ctx.get("eval.bootstrap")?,
        ctx.get("eval.level")?,
        ctx.seed,
    )?;
    let prov = ctx.provenance(&[("evaluate.split", split.to_string())]);
    write_json(&ctx.out_path("evaluation.json"), &prov, &report)?;
    write_text(
        &ctx.out_path("evaluation.md"),
        &grading_markdown(&format!("KL grading ({split} split)"), &report),
    )?;
    if let Some(q) = report.get("QWK").and_then(|m| m.value) {
        println!("{split}: qwk {q:.4} on {} rows", report.n);
    }
    Ok(())
}
