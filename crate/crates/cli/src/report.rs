use std::fmt::Write;

use serde::Deserialize;

use kneeoa_core::eval::report::{family_ablation_markdown, grading_markdown, intervention_markdown};
use kneeoa_core::eval::{FamilyAblationRow, InterventionRow, MetricReport};

use crate::context::{read_json, write_text, CliError, CliResult, Provenance, RunContext};

pub const DISCLAIMER: &str = "Numbers below come from the dataset and settings recorded in each \
artifact's provenance. They are not expected to reproduce published absolute values; compare \
orderings and intervals instead.";

#[derive(Deserialize)]
struct Rows<T> {
    provenance: Provenance,
    rows: Vec<T>,
}

#[derive(Deserialize)]
struct Cv {
    mean_qwk: f64,
    std_qwk: f64,
    folds: usize,
}

#[derive(Deserialize)]
struct TrainSummary {
    n_train: usize,
    cv: Option<Cv>,
}

fn optional<T: serde::de::DeserializeOwned>(ctx: &RunContext, name: &str) -> CliResult<Option<T>> {
    let path = ctx.out_path(name);
    if !path.exists() {
        log::warn!("{} not found; section omitted", path.display());
        return Ok(None);
    }
    read_json(&path).map(Some)
}

fn provenance_line(s: &mut String, name: &str, p: &Provenance) {
    let _ = writeln!(s, "- `{name}`: {} {}, seed {}, config `{}`", p.tool, p.version, p.seed, &p.config_hash[..12.min(p.config_hash.len())]);
}

pub fn run(ctx: &RunContext) -> CliResult {
    let train: Option<TrainSummary> = optional(ctx, "train_report.json")?;
    let eval: Option<MetricReport> = optional(ctx, "evaluation.json")?;
    let family: Option<Rows<FamilyAblationRow>> = optional(ctx, "ablation_family.json")?;
    let interv: Option<Rows<InterventionRow>> = optional(ctx, "ablation_intervention.json")?;
    if train.is_none() && eval.is_none() && family.is_none() && interv.is_none() {
        return Err(CliError::empty(format!(
            "nothing to report in {}; run train, evaluate and ablate first",
            ctx.out.display()
        )));
    }

    let mut s = String::from("# Knee OA structured-feature report\n\n");
    let _ = writeln!(s, "> {DISCLAIMER}\n");

    s.push_str("## Grading performance\n\n");
    if let Some(t) = &train {
        match &t.cv {
            Some(cv) => {
                let _ = writeln!(
                    s,
                    "Cross-validated QWK on {} training rows: {:.4} ± {:.4} ({} folds).\n",
                    t.n_train, cv.mean_qwk, cv.std_qwk, cv.folds
                );
            }
            None => {
                let _ = writeln!(s, "Trained on {} rows without cross-validation.\n", t.n_train);
            }
        }
    }
    match &eval {
        Some(r) => s.push_str(&grading_markdown(&format!("Held-out {} split", r.protocol), r)),
        None => s.push_str("_evaluation.json missing_\n"),
    }

    s.push_str("\n## Feature-family ablation\n\nEach configuration is retrained on its own columns and scored on the test split.\n\n");
    match &family {
        Some(f) => s.push_str(&family_ablation_markdown(&f.rows)),
        None => s.push_str("_ablation_family.json missing_\n"),
    }

    s.push_str("\n## Inference-time interventions\n\nThe full model is kept fixed; one family at a time is zeroed (set to its training mean) or permuted across test rows.\n\n");
    match &interv {
        Some(f) => s.push_str(&intervention_markdown(&f.rows)),
        None => s.push_str("_ablation_intervention.json missing_\n"),
    }

    s.push_str("\n## Provenance\n\n");
    if let Some(f) = &family {
        provenance_line(&mut s, "ablation_family.json", &f.provenance);
    }
    if let Some(f) = &interv {
        provenance_line(&mut s, "ablation_intervention.json", &f.provenance);
    }
    if let Some(r) = &eval {
        let _ = writeln!(s, "- `evaluation.json`: {} resamples, level {}, seed {}", r.resamples, r.level, r.seed);
    }

    let path = ctx.out_path("report.md");
    write_text(&path, &s)?;
    println!("{}", path.display());
    Ok(())
}
