//! Deterministic intensity pipeline: CLAHE, percentile clipping with `[0, 1]`
//! rescaling, and ImageNet-style standardization.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::stats::quantile_sorted;

const CLAHE_BINS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub clahe_clip_limit: f64,
    /// Tile grid as (columns, rows).
    pub clahe_tiles: (usize, usize),
    /// Lower clipping percentile in `[0, 100]`.
    pub clip_lo: f64,
    pub clip_hi: f64,
    pub standardize_mu: f64,
    pub standardize_sigma: f64,
    pub apply_clahe: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            clahe_clip_limit: 3.0,
            clahe_tiles: (8, 8),
            clip_lo: 5.0,
            clip_hi: 99.0,
            standardize_mu: 0.485,
            standardize_sigma: 0.229,
            apply_clahe: true,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.clip_lo && self.clip_lo < self.clip_hi && self.clip_hi <= 100.0) {
            return Err(Error::InvalidConfig(format!(
                "clip percentiles must satisfy 0 <= lo < hi <= 100 (got {}, {})",
                self.clip_lo, self.clip_hi
            )));
        }
        if !(self.clahe_clip_limit > 0.0) {
            return Err(Error::InvalidConfig("CLAHE clip limit must be positive".into()));
        }
        if !(self.standardize_sigma > 0.0) {
            return Err(Error::InvalidConfig("standardization sigma must be positive".into()));
        }
        if self.clahe_tiles.0 == 0 || self.clahe_tiles.1 == 0 {
            return Err(Error::InvalidConfig("CLAHE tile grid must be non-empty".into()));
        }
        Ok(())
    }
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    // exact when a == b, which keeps constant images constant
    a + (b - a) * t
}

#[inline]
fn bin_of(v: f64) -> usize {
    (v.clamp(0.0, 1.0) * (CLAHE_BINS - 1) as f64).round() as usize
}

/// Half-open pixel ranges of `tiles` equal partitions of `len`.
fn tile_bounds(len: usize, tiles: usize) -> Vec<(usize, usize)> {
    (0..tiles)
        .map(|i| (i * len / tiles, (i + 1) * len / tiles))
        .collect()
}

/// Interpolation neighbours and weight of coordinate `p` between tile centres.
fn tile_neighbours(centres: &[f64], p: f64) -> (usize, usize, f64) {
    let last = centres.len() - 1;
    if p <= centres[0] {
        return (0, 0, 0.0);
    }
    if p >= centres[last] {
        return (last, last, 0.0);
    }
    let i = centres.partition_point(|&c| c <= p) - 1;
    (i, i + 1, (p - centres[i]) / (centres[i + 1] - centres[i]))
}

/// Contrast-limited adaptive histogram equalization.
///
/// Each tile's 256-bin histogram is clipped at
/// `clip_limit * tile_pixels / 256` (at least one count); the clipped excess
/// is spread uniformly over all bins in a single pass. Tile mappings are the
/// normalized cumulative histograms, blended bilinearly between tile centres.
/// An infinite clip limit gives plain tile-wise equalization.
pub fn clahe(img: &Grid, cfg: &PreprocessConfig) -> Result<Grid> {
    cfg.validate()?;
    let (tiles_x, tiles_y) = cfg.clahe_tiles;
    let (w, h) = (img.width(), img.height());
    if w / tiles_x < 2 || h / tiles_y < 2 {
        return Err(Error::TileTooSmall {
            width: w,
            height: h,
            tiles_x,
            tiles_y,
        });
    }
    let xb = tile_bounds(w, tiles_x);
    let yb = tile_bounds(h, tiles_y);

    let mut luts = vec![[0.0f64; CLAHE_BINS]; tiles_x * tiles_y];
    for (ty, &(y0, y1)) in yb.iter().enumerate() {
        for (tx, &(x0, x1)) in xb.iter().enumerate() {
            let mut hist = [0.0f64; CLAHE_BINS];
            for y in y0..y1 {
                for x in x0..x1 {
                    hist[bin_of(img.get(x, y))] += 1.0;
                }
            }
            let n = ((x1 - x0) * (y1 - y0)) as f64;
            if cfg.clahe_clip_limit.is_finite() {
                let limit = (cfg.clahe_clip_limit * n / CLAHE_BINS as f64).max(1.0);
                let mut excess = 0.0;
                for c in hist.iter_mut() {
                    if *c > limit {
                        excess += *c - limit;
                        *c = limit;
                    }
                }
                let share = excess / CLAHE_BINS as f64;
                for c in hist.iter_mut() {
                    *c += share;
                }
            }
            let lut = &mut luts[ty * tiles_x + tx];
            let mut acc = 0.0;
            for (b, c) in hist.iter().enumerate() {
                acc += c;
                lut[b] = (acc / n).min(1.0);
            }
        }
    }

    let cx: Vec<f64> = xb.iter().map(|&(a, b)| (a + b - 1) as f64 / 2.0).collect();
    let cy: Vec<f64> = yb.iter().map(|&(a, b)| (a + b - 1) as f64 / 2.0).collect();
    let col_nb: Vec<_> = (0..w).map(|x| tile_neighbours(&cx, x as f64)).collect();
    let mut out = Grid::new(w, h, 0.0);
    for y in 0..h {
        let (j0, j1, wy) = tile_neighbours(&cy, y as f64);
        for x in 0..w {
            let (i0, i1, wx) = col_nb[x];
            let b = bin_of(img.get(x, y));
            let top = lerp(luts[j0 * tiles_x + i0][b], luts[j0 * tiles_x + i1][b], wx);
            let bottom = lerp(luts[j1 * tiles_x + i0][b], luts[j1 * tiles_x + i1][b], wx);
            out.set(x, y, lerp(top, bottom, wy));
        }
    }
    Ok(out)
}

/// Clips to the image's own `[clip_lo, clip_hi]` percentiles and rescales to
/// `[0, 1]`. A degenerate range yields all zeros.
pub fn clip_normalize(img: &Grid, cfg: &PreprocessConfig) -> Grid {
    if img.is_empty() {
        return img.clone();
    }
    let mut sorted = img.data().to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = quantile_sorted(&sorted, cfg.clip_lo / 100.0);
    let hi = quantile_sorted(&sorted, cfg.clip_hi / 100.0);
    if !(hi > lo) {
        return img.map(|_| 0.0);
    }
    img.map(|v| (v.clamp(lo, hi) - lo) / (hi - lo))
}

pub fn standardize(img: &Grid, cfg: &PreprocessConfig) -> Grid {
    img.map(|v| (v - cfg.standardize_mu) / cfg.standardize_sigma)
}

pub fn destandardize(img: &Grid, cfg: &PreprocessConfig) -> Grid {
    img.map(|v| v * cfg.standardize_sigma + cfg.standardize_mu)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Jsn,
    OsteophyteFullimage,
    OsteophyteRoi,
    Sclerosis,
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsn" => Ok(Stage::Jsn),
            "osteophyte_fullimage" => Ok(Stage::OsteophyteFullimage),
            "osteophyte_roi" => Ok(Stage::OsteophyteRoi),
            "sclerosis" => Ok(Stage::Sclerosis),
            other => Err(Error::UnknownName {
                kind: "preprocessing stage",
                value: other.to_string(),
            }),
        }
    }
}

/// Stage-specific preprocessing. Full-image stages get CLAHE then clipping;
/// ROI patches are already processed and pass through; the sclerosis stage
/// never sees CLAHE.
pub fn preprocess_for(stage: Stage, img: &Grid, cfg: &PreprocessConfig) -> Result<Grid> {
    match stage {
        Stage::Jsn | Stage::OsteophyteFullimage => {
            if cfg.apply_clahe {
                Ok(clip_normalize(&clahe(img, cfg)?, cfg))
            } else {
                Ok(clip_normalize(img, cfg))
            }
        }
        Stage::OsteophyteRoi => Ok(img.clone()),
        Stage::Sclerosis => Ok(clip_normalize(img, cfg)),
    }
}
