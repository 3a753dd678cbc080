use kneeoa_core::dataio::Split;
use kneeoa_core::features::Imputer;

use crate::context::{read_table, write_json, write_table, CliError, CliResult, RunContext};
use crate::AssembleArgs;

pub fn run(ctx: &RunContext, args: &AssembleArgs) -> CliResult {
    let path = args.features.clone().unwrap_or_else(|| ctx.out_path("features_raw.csv"));
    let mut rows = read_table(&path)?;
    if rows.is_empty() {
        return Err(CliError::empty("raw feature table is empty"));
    }
    let imputer = Imputer::fit(rows.iter().filter(|r| r.split == Split::Train));
    let unseen = imputer.medians.iter().filter(|m| m.is_none()).count();
    if unseen > 0 {
        log::warn!("{unseen} feature slots were never observed in training rows; filled with 0");
    }
    let mut imputed = 0;
    for r in &mut rows {
        imputed += r.missing_count();
        imputer.apply_lenient(r)?;
    }
    let prov = ctx.provenance(&[]);
    ctx.ensure_out()?;
    write_table(&ctx.out_path("features.csv"), &prov, &rows)?;
    write_json(&ctx.out_path("imputer.json"), &prov, &imputer)?;
    println!("assembled {} rows, imputed {imputed} slots", rows.len());
    Ok(())
}
