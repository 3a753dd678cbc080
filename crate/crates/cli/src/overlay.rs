//! Audit overlays, drawn in the canonical (left-knee) frame.

use image::{Rgb, RgbImage};

use kneeoa_core::dataio::load_radiograph;
use kneeoa_core::jsn::Compartment;
use kneeoa_core::pipeline::ImageAudit;
use kneeoa_core::roi::{RoiBox, Site, Tier};
use kneeoa_core::Grid;

use crate::context::{read_json, CliError, CliResult, RunContext};
use crate::font::{draw_text, put};
use crate::OverlayArgs;

pub const BAND_TINT: Rgb<u8> = Rgb([64, 128, 255]);
pub const WIDTH_LINE: Rgb<u8> = Rgb([0, 200, 255]);
pub const MJSW_LINE: Rgb<u8> = Rgb([255, 0, 255]);
pub const FEMORAL_POINT: Rgb<u8> = Rgb([255, 255, 255]);
pub const TIBIAL_POINT: Rgb<u8> = Rgb([255, 64, 64]);
pub const IMPUTED_TEXT: Rgb<u8> = Rgb([255, 0, 0]);

pub fn tier_color(t: Tier) -> Rgb<u8> {
    match t {
        Tier::MaskLandmark => Rgb([0, 255, 0]),
        Tier::Heuristic => Rgb([255, 255, 0]),
        Tier::Fixed => Rgb([255, 0, 0]),
    }
}

fn site_label(s: Site) -> &'static str {
    match s {
        Site::MedialFemur => "MF",
        Site::LateralFemur => "LF",
        Site::MedialTibia => "MT",
        Site::LateralTibia => "LT",
    }
}

fn tier_label(t: Tier) -> &'static str {
    match t {
        Tier::MaskLandmark => "T1",
        Tier::Heuristic => "T2",
        Tier::Fixed => "T3",
    }
}

fn blend(img: &mut RgbImage, x: usize, y: usize, c: Rgb<u8>, alpha: f64) {
    if x as u32 >= img.width() || y as u32 >= img.height() {
        return;
    }
    let p = img.get_pixel_mut(x as u32, y as u32);
    for k in 0..3 {
        p.0[k] = (p.0[k] as f64 * (1.0 - alpha) + c.0[k] as f64 * alpha).round() as u8;
    }
}

fn draw_box(img: &mut RgbImage, roi: &RoiBox) {
    let (x0, y0) = roi.origin();
    let s = roi.size as i64;
    let c = tier_color(roi.tier);
    for d in 0..s {
        put(img, x0 + d, y0, c);
        put(img, x0 + d, y0 + s - 1, c);
        put(img, x0, y0 + d, c);
        put(img, x0 + s - 1, y0 + d, c);
    }
    let label = format!("{} {}", site_label(roi.site), tier_label(roi.tier));
    draw_text(img, x0.max(0) + 2, y0.max(0) + 2, &label, c);
}

fn vline(img: &mut RgbImage, x: i64, y0: f64, y1: f64, c: Rgb<u8>) {
    let (a, b) = (y0.min(y1).round() as i64, y0.max(y1).round() as i64);
    for y in a..=b {
        put(img, x, y, c);
    }
}

/// Renders the audit over the canonical-frame image.
pub fn render(base: &Grid, audit: &ImageAudit) -> RgbImage {
    let mut img = RgbImage::from_fn(base.width() as u32, base.height() as u32, |x, y| {
        let v = (base.get(x as usize, y as usize).clamp(0.0, 1.0) * 255.0).round() as u8;
        Rgb([v, v, v])
    });
    for band in &audit.bands {
        for (i, &x) in band.columns.iter().enumerate() {
            for y in band.rows(i) {
                blend(&mut img, x, y, BAND_TINT, 0.35);
            }
        }
    }
    for roi in &audit.rois {
        draw_box(&mut img, roi);
    }
    let profiles: Vec<_> = Compartment::BOTH
        .into_iter()
        .filter_map(|c| audit.measurement.get(c).map(|m| &m.profile))
        .collect();
    for p in &profiles {
        let narrowest = p.argmin();
        for (i, s) in p.stations.iter().enumerate() {
            let c = if i == narrowest { MJSW_LINE } else { WIDTH_LINE };
            vline(&mut img, s.x.round() as i64, s.f_y, s.t_y, c);
        }
    }
    // station points last so nothing covers them
    for p in &profiles {
        for s in &p.stations {
            let x = s.x.round() as i64;
            put(&mut img, x, s.f_y.round() as i64, FEMORAL_POINT);
            put(&mut img, x, s.t_y.round() as i64, TIBIAL_POINT);
        }
    }
    if !audit.mask_present {
        draw_text(&mut img, 2, 2, "IMPUTED", IMPUTED_TEXT);
    }
    img
}

pub fn run(ctx: &RunContext, args: &OverlayArgs) -> CliResult {
    let audit: ImageAudit = read_json(&args.audit)?;
    let image = load_radiograph(&args.image, audit.side)?;
    if (image.width(), image.height()) != (audit.width, audit.height) {
        return Err(CliError::invocation(format!(
            "image is {}x{} but the audit was made on {}x{}",
            image.width(),
            image.height(),
            audit.width,
            audit.height
        )));
    }
    let out = args
        .output
        .clone()
        .unwrap_or_else(|| ctx.out.join("overlays").join(format!("{}.png", audit.id)));
    if let Some(dir) = out.parent() {
        std::fs::create_dir_all(dir)?;
    }
    render(&image.pixels, &audit).save(&out)?;
    println!("{}", out.display());
    Ok(())
}
