use serde::Serialize;

use kneeoa_core::dataio::Split;
use kneeoa_core::eval::report::{family_ablation_markdown, intervention_markdown};
use kneeoa_core::eval::{ablation_family, ablation_intervention, FamilyAblationRow, InterventionRow, FAMILY_CONFIGS};
use kneeoa_core::features::Target;

use crate::context::{load_model, matrix, read_table, require_complete, require_split, write_json, write_text, CliError, CliResult, RunContext};
use crate::{AblateArgs, Protocol};

#[derive(Serialize)]
struct FamilyAblation {
    n_train: usize,
    n_test: usize,
    rows: Vec<FamilyAblationRow>,
}

#[derive(Serialize)]
struct InterventionAblation {
    n_test: usize,
    rows: Vec<InterventionRow>,
}

fn targets(names: &[String]) -> CliResult<Vec<Target>> {
    if names.is_empty() {
        return Ok(Target::ALL.to_vec());
    }
    names
        .iter()
        .map(|n| n.trim().parse().map_err(|e: kneeoa_core::Error| CliError::invocation(e.to_string())))
        .collect()
}

pub fn run(ctx: &RunContext, args: &AblateArgs) -> CliResult {
    let rows = read_table(&args.features.clone().unwrap_or_else(|| ctx.out_path("features.csv")))?;
    require_complete(&rows)?;
    let test = require_split(&rows, Split::Test)?;
    let targets = targets(&args.families)?;
    let prov = ctx.provenance(&[]);
    ctx.ensure_out()?;

    if matches!(args.protocol, Protocol::Family | Protocol::Both) {
        let train = require_split(&rows, Split::Train)?;
        let train: Vec<_> = train.into_iter().cloned().collect();
        let test: Vec<_> = test.iter().map(|r| (*r).clone()).collect();
        let out = ablation_family(&train, &test, &ctx.gbt_params()?, &FAMILY_CONFIGS)?;
        write_text(&ctx.out_path("ablation_family.md"), &family_ablation_markdown(&out))?;
        write_json(
            &ctx.out_path("ablation_family.json"),
            &prov,
            &FamilyAblation {
                n_train: train.len(),
                n_test: test.len(),
                rows: out,
            },
        )?;
        println!("family ablation: {} configurations", FAMILY_CONFIGS.len());
    }

    if matches!(args.protocol, Protocol::Intervention | Protocol::Both) {
        let model = load_model(&args.model.clone().unwrap_or_else(|| ctx.out_path("model.json")))?;
        let (x, y) = matrix(&test);
        let out = ablation_intervention(&model, &x, &y, &targets, ctx.seed)?;
        write_text(&ctx.out_path("ablation_intervention.md"), &intervention_markdown(&out))?;
        write_json(
            &ctx.out_path("ablation_intervention.json"),
            &prov,
            &InterventionAblation {
                n_test: y.len(),
                rows: out,
            },
        )?;
        println!("intervention ablation: {} targets", targets.len());
    }
    Ok(())
}
