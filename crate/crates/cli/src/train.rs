use std::collections::HashMap;

use serde::Serialize;

use kneeoa_core::dataio::Split;
use kneeoa_core::features::{Family, StructuredVector, FEATURE_NAMES};
use kneeoa_core::model::{cross_validate, GbtEnsemble, GbtParams, SclerosisHead};

use crate::context::{matrix, read_table, require_complete, require_split, write_json, CliResult, RunContext};
use crate::TrainArgs;

#[derive(Serialize)]
struct CvSummary {
    folds: usize,
    fold_qwk: Vec<f64>,
    mean_qwk: f64,
    std_qwk: f64,
}

#[derive(Serialize)]
struct TrainReport {
    params: GbtParams,
    n_train: usize,
    class_counts: Vec<usize>,
    cv: Option<CvSummary>,
    loss_history: Vec<f64>,
    used_features: Vec<String>,
    sclerosis_head: Option<SclerosisSummary>,
}

#[derive(Serialize)]
struct SclerosisSummary {
    n_train: usize,
    n_val: usize,
    threshold: f64,
    val_macro_f1: f64,
}

/// Training rows joined with manifest sclerosis labels by id.
fn sclerosis_rows(
    ctx: &RunContext,
    rows: &[StructuredVector],
    split: Split,
) -> CliResult<Option<(Vec<Vec<f64>>, Vec<u8>)>> {
    if ctx.manifest.is_none() {
        return Ok(None);
    }
    let manifest = ctx.require_manifest()?;
    let labels: HashMap<&str, u8> = manifest
        .rows
        .iter()
        .filter_map(|r| r.sclerosis_label.map(|l| (r.id.as_str(), l)))
        .collect();
    let (x, y): (Vec<Vec<f64>>, Vec<u8>) = rows
        .iter()
        .filter(|r| r.split == split)
        .filter_map(|r| labels.get(r.id.as_str()).map(|&l| (r.family(Family::Scl).to_vec(), l)))
        .unzip();
    Ok((!x.is_empty()).then_some((x, y)))
}

pub fn run(ctx: &RunContext, args: &TrainArgs) -> CliResult {
    let path = args.features.clone().unwrap_or_else(|| ctx.out_path("features.csv"));
    let rows = read_table(&path)?;
    require_complete(&rows)?;
    let train = require_split(&rows, Split::Train)?;
    let (x, y) = matrix(&train);
    let params = ctx.gbt_params()?;
    let names = FEATURE_NAMES.to_vec();

    let cv = if args.no_cv {
        None
    } else {
        let k: usize = ctx.get("cv.folds")?;
        let r = cross_validate(&x, &y, &names, &params, k, ctx.seed)?;
        println!("cv qwk {:.4} +/- {:.4} over {} folds", r.mean_qwk, r.std_qwk, r.folds);
        Some(CvSummary {
            folds: r.folds,
            fold_qwk: r.fold_qwk,
            mean_qwk: r.mean_qwk,
            std_qwk: r.std_qwk,
        })
    };

    let (model, loss_history) = GbtEnsemble::fit(&x, &y, &names, &params, None)?;
    let prov = ctx.provenance(&[]);
    ctx.ensure_out()?;
    write_json(&ctx.out_path("model.json"), &prov, &model)?;

    let head = match (sclerosis_rows(ctx, &rows, Split::Train)?, sclerosis_rows(ctx, &rows, Split::Val)?) {
        (Some((tx, ty)), Some((vx, vy))) => {
            let h = SclerosisHead::fit(&tx, &ty, &vx, &vy)?;
            write_json(&ctx.out_path("sclerosis_head.json"), &prov, &h)?;
            Some(SclerosisSummary {
                n_train: tx.len(),
                n_val: vx.len(),
                threshold: h.threshold,
                val_macro_f1: h.val_macro_f1,
            })
        }
        (Some(_), None) => {
            log::warn!("sclerosis labels present but no labelled validation rows; head not trained");
            None
        }
        _ => None,
    };

    let mut class_counts = vec![0; params.class_count];
    for &c in &y {
        class_counts[c as usize] += 1;
    }
    let report = TrainReport {
        params,
        n_train: y.len(),
        class_counts,
        cv,
        used_features: model.used_features().iter().map(|&j| model.feature_names[j].clone()).collect(),
        loss_history,
        sclerosis_head: head,
    };
    write_json(&ctx.out_path("train_report.json"), &prov, &report)?;
    println!(
        "trained {} trees on {} rows, final loss {:.4}",
        model.trees.len(),
        report.n_train,
        report.loss_history.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}
