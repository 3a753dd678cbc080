use kneeoa_core::dataio::Split;
use kneeoa_core::model::{occlusion_attribution, permutation_importance};

use crate::context::{load_model, matrix, read_table, require_complete, require_split, write_json, CliError, CliResult, RunContext};
use crate::AttributeArgs;

pub fn run(ctx: &RunContext, args: &AttributeArgs) -> CliResult {
    let rows = read_table(&args.features.clone().unwrap_or_else(|| ctx.out_path("features.csv")))?;
    require_complete(&rows)?;
    let model = load_model(&args.model.clone().unwrap_or_else(|| ctx.out_path("model.json")))?;
    let split: Split = args.split.into();
    let (x, y) = matrix(&require_split(&rows, split)?);
    let repeats: usize = ctx.get("attribute.repeats")?;
    if repeats == 0 {
        return Err(CliError::invocation("attribute.repeats must be positive"));
    }

    // resolve ids before the expensive part
    let targets = args
        .images
        .iter()
        .map(|id| {
            rows.iter()
                .find(|r| &r.id == id)
                .ok_or_else(|| CliError::invocation(format!("image id '{id}' is not in the feature table")))
        })
        .collect::<CliResult<Vec<_>>>()?;

    let imp = permutation_importance(&model, &x, &y, repeats, ctx.seed)?;
    let prov = ctx.provenance(&[("attribute.split", split.to_string())]);
    write_json(&ctx.out_path("attribution.json"), &prov, &imp)?;
    for r in targets {
        let occ = occlusion_attribution(&model, &r.values)?;
        write_json(&ctx.out.join("occlusion").join(format!("{}.json", r.id)), &prov, &occ)?;
    }
    let mut top: Vec<_> = imp.features.iter().collect();
    top.sort_by(|a, b| b.mean_drop.total_cmp(&a.mean_drop));
    for f in top.iter().take(5) {
        println!("{:<8} {:+.4}", f.name, f.mean_drop);
    }
    Ok(())
}
