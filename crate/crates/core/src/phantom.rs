//! Synthetic knee phantoms with known joint-space geometry.
//!
//! A phantom mask draws each compartment as a horizontal band whose label
//! rows run from the femoral edge to the tibial edge inclusive, so a band of
//! gap `g` occupies `g + 1` rows and measures exactly `g`.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataio::{save_gray_png, save_mask_png, LabelMask, Side, Split, LABEL_LATERAL, LABEL_MEDIAL};
use crate::error::{Error, Result};
use crate::features::{StructuredVector, FEATURE_COUNT, OSTEOPHYTE_DIMS};
use crate::grid::Grid;
use crate::jsn::JSN_DIMS;
use crate::texture::SCLEROSIS_DIMS;

#[derive(Debug, Clone, PartialEq)]
pub struct BandSpec {
    pub width: usize,
    pub height: usize,
    pub med_cols: (usize, usize),
    pub lat_cols: (usize, usize),
    pub top_med: usize,
    pub top_lat: usize,
    pub gap_med: usize,
    pub gap_lat: usize,
}

impl BandSpec {
    /// 224x224 layout whose compartments are mirror images of each other.
    pub fn symmetric(gap_med: usize, gap_lat: usize) -> Self {
        BandSpec {
            width: 224,
            height: 224,
            med_cols: (30, 100),
            lat_cols: (123, 193),
            top_med: 100,
            top_lat: 100,
            gap_med,
            gap_lat,
        }
    }
}

pub fn band_mask(spec: &BandSpec) -> LabelMask {
    let mut m = LabelMask::new(spec.width, spec.height);
    let mut draw = |cols: (usize, usize), top: usize, gap: usize, label: u8| {
        for y in top..=(top + gap).min(spec.height - 1) {
            for x in cols.0..=cols.1.min(spec.width - 1) {
                m.set(x, y, label);
            }
        }
    };
    draw(spec.med_cols, spec.top_med, spec.gap_med, LABEL_MEDIAL);
    draw(spec.lat_cols, spec.top_lat, spec.gap_lat, LABEL_LATERAL);
    m
}

/// Radiograph-like intensities for a band phantom: bright textured bone above
/// and below a dark joint space. `sclerosis` in `[0, 1]` brightens and
/// coarsens the subchondral tibial bone.
pub fn phantom_radiograph(spec: &BandSpec, sclerosis: f64, seed: u64) -> Grid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask = band_mask(spec);
    let coarse: Vec<f64> = (0..(spec.width / 4 + 1) * (spec.height / 4 + 1))
        .map(|_| rng.gen::<f64>())
        .collect();
    let cw = spec.width / 4 + 1;
    Grid::from_fn(spec.width, spec.height, |x, y| {
        let label = mask.get(x, y);
        let fine = rng.gen::<f64>();
        let joint_top = if x < spec.width / 2 { spec.top_med } else { spec.top_lat };
        let joint_bottom = joint_top + if x < spec.width / 2 { spec.gap_med } else { spec.gap_lat };
        let v = if label != 0 {
            0.15 + 0.05 * fine
        } else if y < joint_top {
            0.55 + 0.1 * fine + 0.1 * coarse[(y / 4) * cw + x / 4]
        } else if y > joint_bottom {
            let depth = (y - joint_bottom) as f64;
            let subchondral = (-depth / 20.0).exp() * sclerosis;
            0.5 + 0.25 * subchondral + (0.08 + 0.1 * sclerosis) * coarse[(y / 4) * cw + x / 4] + 0.08 * fine
        } else {
            0.25 + 0.05 * fine
        };
        v.clamp(0.0, 1.0)
    })
}

#[derive(Debug, Clone)]
pub struct PhantomOptions {
    pub n: usize,
    pub seed: u64,
    /// Every `missing_mask_every`-th image gets no mask (0 disables).
    pub missing_mask_every: usize,
}

impl Default for PhantomOptions {
    fn default() -> Self {
        PhantomOptions {
            n: 50,
            seed: 7,
            missing_mask_every: 0,
        }
    }
}

/// Writes `n` phantom radiographs, masks and a manifest into `dir`; returns
/// the manifest path. KL grade drives the joint gaps, osteophyte grades and
/// sclerosis. Right knees are stored in acquisition orientation (mirrored).
pub fn write_phantom_dataset(dir: &Path, opts: &PhantomOptions) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let manifest_path = dir.join("manifest.csv");
    let mut out = std::fs::File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let mut text = String::from(
        "image_path,mask_path,split,kl_grade,side,osp_mf,osp_lf,osp_mt,osp_lt,sclerosis\n",
    );
    for i in 0..opts.n {
        let kl = match i % 10 {
            0 => 0,
            1..=3 => i % 5,
            _ => rng.gen_range(0..5),
        };
        let split = match i % 10 {
            0..=6 => Split::Train,
            7 => Split::Val,
            _ => Split::Test,
        };
        let side = if rng.gen_bool(0.5) { Side::Left } else { Side::Right };
        let gap_med = (16 - 3 * kl as i64 + rng.gen_range(-1..=1)).max(1) as usize;
        let gap_lat = (13 - kl as i64 + rng.gen_range(-1..=1)).max(1) as usize;
        let mut spec = BandSpec::symmetric(gap_med, gap_lat);
        spec.top_med = 96 + rng.gen_range(0..8);
        spec.top_lat = 96 + rng.gen_range(0..8);
        let osp: Vec<u8> = (0..4)
            .map(|_| (kl as i64 - 1 + rng.gen_range(-1..=1)).clamp(0, 3) as u8)
            .collect();
        let scl = u8::from(kl >= 3 && rng.gen_bool(0.8) || kl < 3 && rng.gen_bool(0.1));

        let img = phantom_radiograph(&spec, scl as f64, opts.seed.wrapping_mul(1_000_003) + i as u64);
        let mask = band_mask(&spec);
        let (img, mask) = match side {
            Side::Left => (img, mask),
            Side::Right => (img.mirrored(), mask.mirrored()),
        };
        let image_name = format!("knee_{i:04}.png");
        save_gray_png(&img, dir.join(&image_name))?;
        let mask_name = if opts.missing_mask_every > 0 && i % opts.missing_mask_every == opts.missing_mask_every - 1 {
            String::new()
        } else {
            let name = format!("knee_{i:04}_mask.png");
            save_mask_png(&mask, dir.join(&name))?;
            name
        };
        text.push_str(&format!(
            "{image_name},{mask_name},{split},{kl},{},{},{},{},{},{scl}\n",
            side.as_str(),
            osp[0],
            osp[1],
            osp[2],
            osp[3]
        ));
    }
    out.write_all(text.as_bytes()).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest_path)
}

/// Synthetic feature table: a latent severity drives every JSN column
/// (narrower joints, higher rates) and the KL grade is a noisy monotone
/// function of it; osteophyte and sclerosis columns are unrelated noise.
/// Splits follow a 70/10/20 pattern by row index.
pub fn synthetic_feature_table(n: usize, seed: u64) -> Vec<StructuredVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let severity: f64 = rng.gen_range(0.0..5.0);
            let kl = (severity + rng.gen_range(-0.15..0.15)).floor().clamp(0.0, 4.0) as u8;
            let mut values = Vec::with_capacity(FEATURE_COUNT);
            for j in 0..JSN_DIMS {
                let slope = if j >= 18 { 8.0 } else { -1.4 };
                values.push(8.0 + slope * severity + rng.gen_range(-0.4..0.4) + 0.1 * j as f64);
            }
            for _ in 0..OSTEOPHYTE_DIMS {
                values.push(rng.gen_range(0..4) as f64);
            }
            for _ in 0..SCLEROSIS_DIMS {
                values.push(rng.gen_range(0.0..1.0));
            }
            let split = match i % 10 {
                0..=6 => Split::Train,
                7 => Split::Val,
                _ => Split::Test,
            };
            StructuredVector {
                id: format!("syn_{i:05}"),
                split,
                kl_grade: kl,
                values,
            }
        })
        .collect()
}
