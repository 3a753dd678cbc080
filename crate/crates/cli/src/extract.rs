use rayon::prelude::*;

use kneeoa_core::dataio::save_gray_png;
use kneeoa_core::jsn::Kl0Reference;
use kneeoa_core::pipeline::{extract, fit_kl0_reference, load_image, osteophyte_patches, ExtractOptions, LoadedImage};

use crate::context::{read_json, write_json, write_table, CliError, CliResult, RunContext};
use crate::ExtractArgs;

fn parse_tiles(s: &str) -> CliResult<(usize, usize)> {
    let bad = || CliError::invocation(format!("--clahe-tiles expects COLSxROWS, got '{s}'"));
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

pub fn options(ctx: &RunContext, args: &ExtractArgs) -> CliResult<ExtractOptions> {
    let mut opts = ExtractOptions::default();
    let p = &mut opts.preprocess;
    if let Some(c) = args.clahe_clip {
        p.clahe_clip_limit = c;
    }
    if let Some(t) = &args.clahe_tiles {
        p.clahe_tiles = parse_tiles(t)?;
    }
    if let Some(v) = args.clip_lo {
        p.clip_lo = v;
    }
    if let Some(v) = args.clip_hi {
        p.clip_hi = v;
    }
    p.validate().map_err(|e| CliError::invocation(e.to_string()))?;
    opts.subchondral_depth = ctx.get("roi.depth")?;
    if opts.subchondral_depth == 0 {
        return Err(CliError::invocation("roi.depth must be positive"));
    }
    Ok(opts)
}

pub fn run(ctx: &RunContext, args: &ExtractArgs) -> CliResult {
    let manifest = ctx.require_manifest()?;
    if manifest.is_empty() {
        return Err(CliError::empty("manifest lists no images"));
    }
    let opts = options(ctx, args)?;
    let p = &opts.preprocess;
    let prov = ctx.provenance(&[
        ("extract.clahe_clip", p.clahe_clip_limit.to_string()),
        ("extract.clahe_tiles", format!("{}x{}", p.clahe_tiles.0, p.clahe_tiles.1)),
        ("extract.clip_lo", p.clip_lo.to_string()),
        ("extract.clip_hi", p.clip_hi.to_string()),
    ]);

    // Pass 1: load and measure everything; the reference needs all KL-0 knees.
    let loaded: Vec<Option<LoadedImage>> = manifest
        .rows
        .par_iter()
        .map(|row| match load_image(&manifest, row) {
            Ok(img) => Some(img),
            Err(e) => {
                log::error!("{}: {e}", row.id);
                None
            }
        })
        .collect();
    let images: Vec<&LoadedImage> = loaded.iter().flatten().collect();
    if images.is_empty() {
        return Err(CliError::empty("no image could be loaded"));
    }

    let reference = match &args.kl0_ref {
        Some(path) => read_json::<Kl0Reference>(path)?,
        None => fit_kl0_reference(images.iter().copied())?,
    };
    log::info!(
        "KL-0 reference: medial {:.3}, lateral {:.3} from {} images",
        reference.median_mjsw_med,
        reference.median_mjsw_lat,
        reference.n_images
    );

    // Pass 2: features and audits, in manifest order.
    let results: Vec<Option<_>> = images
        .par_iter()
        .map(|img| match extract(img, &reference, &opts) {
            Ok(e) => Some((e, *img)),
            Err(e) => {
                log::error!("{}: {e}", img.row.id);
                None
            }
        })
        .collect();
    let (extracted, sources): (Vec<_>, Vec<_>) = results.into_iter().flatten().unzip();
    if extracted.is_empty() {
        return Err(CliError::empty("no image produced features"));
    }

    ctx.ensure_out()?;
    let rows: Vec<_> = extracted.iter().map(|e| e.vector.clone()).collect();
    write_table(&ctx.out_path("features_raw.csv"), &prov, &rows)?;
    write_json(&ctx.out_path("kl0_reference.json"), &prov, &reference)?;
    for e in &extracted {
        write_json(&ctx.out.join("audit").join(format!("{}.json", e.audit.id)), &prov, &e.audit)?;
    }

    if let Some(dir) = &args.dump_rois {
        std::fs::create_dir_all(dir)?;
        extracted
            .par_iter()
            .zip(sources.par_iter())
            .try_for_each(|(e, img)| -> CliResult {
                let patches = osteophyte_patches(img, &e.audit.rois, &opts)?;
                for (roi, patch) in e.audit.rois.iter().zip(&patches) {
                    let name = format!("{}_{}_{}.png", e.audit.id, roi.site.as_str(), roi.tier.as_str());
                    save_gray_png(patch, dir.join(name))?;
                }
                Ok(())
            })?;
    }

    let failed = manifest.len() - extracted.len();
    println!("extracted {} of {} images", extracted.len(), manifest.len());
    if failed > 0 {
        return Err(CliError::empty(format!("{failed} images failed; see log")));
    }
    Ok(())
}
