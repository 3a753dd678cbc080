//! Subchondral texture descriptors.
//!
//! Descriptors operate on one or more texture fields (straightened bands).
//! Several fields are pooled as a union: histograms and co-occurrence counts
//! are accumulated over all fields, so no artificial seam is introduced.

use serde::{Deserialize, Serialize};

use crate::dataio::LabelMask;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::jsn::{Compartment, Quality};
use crate::roi::{subchondral_band, SubchondralBand, SUBCHONDRAL_DEPTH};

pub const LBP_RADII: [usize; 3] = [1, 2, 3];
pub const LBP_NEIGHBOURS: usize = 8;
/// riu2 bins: uniform patterns with 0..=8 set bits, plus one non-uniform bin.
pub const LBP_BINS: usize = LBP_NEIGHBOURS + 2;
pub const GLCM_LEVELS: usize = 32;
/// Offsets (dx, dy) for 0, 45, 90 and 135 degrees at distance 1.
pub const GLCM_OFFSETS: [(i64, i64); 4] = [(1, 0), (1, -1), (0, -1), (-1, -1)];
pub const DBC_SIZES: [usize; 4] = [2, 4, 8, 16];
pub const SCLEROSIS_DIMS: usize = 18;

/// Shannon entropy (natural log, `0 ln 0 = 0`) and energy of a distribution.
pub fn entropy_energy(p: &[f64]) -> (f64, f64) {
    let mut entropy = 0.0;
    let mut energy = 0.0;
    for &v in p {
        if v > 0.0 {
            entropy -= v * v.ln();
        }
        energy += v * v;
    }
    (entropy.max(0.0), energy)
}

/// Rotation-invariant uniform code of an 8-bit circular pattern.
pub fn riu2_code(bits: u8) -> usize {
    let transitions = (bits ^ bits.rotate_right(1)).count_ones();
    if transitions <= 2 {
        bits.count_ones() as usize
    } else {
        LBP_NEIGHBOURS + 1
    }
}

fn snap(v: f64) -> f64 {
    if (v - v.round()).abs() < 1e-9 {
        v.round()
    } else {
        v
    }
}

fn neighbour_offsets(radius: usize) -> [(f64, f64); LBP_NEIGHBOURS] {
    let r = radius as f64;
    std::array::from_fn(|p| {
        let theta = 2.0 * std::f64::consts::PI * p as f64 / LBP_NEIGHBOURS as f64;
        (snap(r * theta.cos()), snap(-r * theta.sin()))
    })
}

/// Bilinear sample of `g - origin`. Working on differences keeps the sign
/// of the result exact under intensity shifts whenever the shifted values
/// themselves are exact.
fn bilinear(g: &Grid, x: f64, y: f64, origin: f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let (fx, fy) = (x - x0, y - y0);
    let (x0, y0) = (x0 as usize, y0 as usize);
    let row = |yy: usize| {
        let a = g.get(x0, yy) - origin;
        if fx == 0.0 {
            a
        } else {
            a + (g.get(x0 + 1, yy) - origin - a) * fx
        }
    };
    let top = row(y0);
    if fy == 0.0 {
        top
    } else {
        top + (row(y0 + 1) - top) * fy
    }
}

/// Normalized riu2 histogram over the interior pixels of all fields.
/// Bit `p` is set when the neighbour is at least as bright as the centre.
pub fn lbp_histogram(fields: &[Grid], radius: usize) -> Result<[f64; LBP_BINS]> {
    let offsets = neighbour_offsets(radius);
    let mut hist = [0.0; LBP_BINS];
    let mut total = 0usize;
    for g in fields {
        if g.width() < 2 * radius + 1 || g.height() < 2 * radius + 1 {
            continue;
        }
        for y in radius..g.height() - radius {
            for x in radius..g.width() - radius {
                let centre = g.get(x, y);
                let mut bits = 0u8;
                for (p, &(dx, dy)) in offsets.iter().enumerate() {
                    if bilinear(g, x as f64 + dx, y as f64 + dy, centre) >= 0.0 {
                        bits |= 1 << p;
                    }
                }
                hist[riu2_code(bits)] += 1.0;
                total += 1;
            }
        }
    }
    if total == 0 {
        let (w, h) = fields.first().map(|g| (g.width(), g.height())).unwrap_or((0, 0));
        return Err(Error::RegionTooSmall {
            width: w,
            height: h,
            required: 2 * radius + 1,
        });
    }
    for v in hist.iter_mut() {
        *v /= total as f64;
    }
    Ok(hist)
}

/// (entropy, energy) of the riu2 LBP histogram at `radius`.
pub fn lbp_features(fields: &[Grid], radius: usize) -> Result<(f64, f64)> {
    Ok(entropy_energy(&lbp_histogram(fields, radius)?))
}

#[inline]
pub fn glcm_level(v: f64) -> usize {
    ((v.clamp(0.0, 1.0) * GLCM_LEVELS as f64).floor() as usize).min(GLCM_LEVELS - 1)
}

/// Symmetric normalized co-occurrence matrix (row-major, `GLCM_LEVELS`^2) for
/// one offset, pooled over fields. `None` when no pixel pair exists.
pub fn glcm_matrix(fields: &[Grid], offset: (i64, i64)) -> Option<Vec<f64>> {
    let n = GLCM_LEVELS;
    let mut counts = vec![0.0; n * n];
    let mut pairs = 0usize;
    for g in fields {
        let (w, h) = (g.width() as i64, g.height() as i64);
        for y in 0..h {
            for x in 0..w {
                let (nx, ny) = (x + offset.0, y + offset.1);
                if nx < 0 || ny < 0 || nx >= w || ny >= h {
                    continue;
                }
                let i = glcm_level(g.get(x as usize, y as usize));
                let j = glcm_level(g.get(nx as usize, ny as usize));
                counts[i * n + j] += 1.0;
                counts[j * n + i] += 1.0;
                pairs += 1;
            }
        }
    }
    if pairs == 0 {
        return None;
    }
    let total = 2.0 * pairs as f64;
    counts.iter_mut().for_each(|c| *c /= total);
    Some(counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlcmStats {
    pub contrast: f64,
    pub correlation: f64,
    pub energy: f64,
    pub homogeneity: f64,
    pub entropy: f64,
}

impl GlcmStats {
    /// Haralick statistics of a normalized square matrix. Correlation is 0
    /// when either marginal has zero variance.
    pub fn from_matrix(p: &[f64]) -> Self {
        let n = (p.len() as f64).sqrt() as usize;
        assert_eq!(n * n, p.len(), "square matrix");
        let (mut mu_i, mut mu_j) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let v = p[i * n + j];
                mu_i += i as f64 * v;
                mu_j += j as f64 * v;
            }
        }
        let (mut var_i, mut var_j, mut cov) = (0.0, 0.0, 0.0);
        let (mut contrast, mut homogeneity) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let v = p[i * n + j];
                let (di, dj) = (i as f64 - mu_i, j as f64 - mu_j);
                var_i += di * di * v;
                var_j += dj * dj * v;
                cov += di * dj * v;
                let d = i as f64 - j as f64;
                contrast += d * d * v;
                homogeneity += v / (1.0 + d * d);
            }
        }
        let denom = (var_i * var_j).sqrt();
        let correlation = if denom > 1e-12 { cov / denom } else { 0.0 };
        let (entropy, energy) = entropy_energy(p);
        GlcmStats {
            contrast,
            correlation,
            energy,
            homogeneity,
            entropy,
        }
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.contrast, self.correlation, self.energy, self.homogeneity, self.entropy]
    }
}

/// Statistics of the angle-averaged co-occurrence matrix (32 levels, d=1).
pub fn glcm_features(fields: &[Grid]) -> Result<GlcmStats> {
    let n = GLCM_LEVELS;
    if fields.iter().all(Grid::is_empty) {
        return Err(Error::RegionTooSmall {
            width: 0,
            height: 0,
            required: 1,
        });
    }
    let matrices: Vec<Vec<f64>> = GLCM_OFFSETS
        .iter()
        .filter_map(|&o| glcm_matrix(fields, o))
        .collect();
    if matrices.is_empty() {
        // single-pixel fields: a spike at the pixel's own level
        let mut p = vec![0.0; n * n];
        let l = glcm_level(fields.iter().find(|g| !g.is_empty()).unwrap().get(0, 0));
        p[l * n + l] = 1.0;
        return Ok(GlcmStats::from_matrix(&p));
    }
    let mut avg = vec![0.0; n * n];
    for m in &matrices {
        for (a, v) in avg.iter_mut().zip(m) {
            *a += v;
        }
    }
    let k = matrices.len() as f64;
    avg.iter_mut().for_each(|a| *a /= k);
    Ok(GlcmStats::from_matrix(&avg))
}

/// Box counts per size for one field, rescaled to the full field area.
fn dbc_counts(g: &Grid) -> [f64; 4] {
    let extent = g.width().min(g.height()) as f64;
    let area = (g.width() * g.height()) as f64;
    DBC_SIZES.map(|s| {
        let box_height = s as f64 / extent; // intensity range of [0,1] over the grid extent
        let (cols, rows) = (g.width() / s, g.height() / s);
        let mut count = 0.0;
        for cy in 0..rows {
            for cx in 0..cols {
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for y in cy * s..(cy + 1) * s {
                    for x in cx * s..(cx + 1) * s {
                        let v = g.get(x, y);
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                }
                count += ((hi - lo) / box_height).ceil() + 1.0;
            }
        }
        count * area / ((cols * rows * s * s) as f64)
    })
}

/// Differential box-counting dimension of the intensity surface, clamped to
/// `[2, 3]`. Fields smaller than 16x16 are skipped.
pub fn fractal_dimension(fields: &[Grid]) -> Result<f64> {
    let min_side = *DBC_SIZES.last().unwrap();
    let usable: Vec<&Grid> = fields
        .iter()
        .filter(|g| g.width() >= min_side && g.height() >= min_side)
        .collect();
    if usable.is_empty() {
        let (w, h) = fields.first().map(|g| (g.width(), g.height())).unwrap_or((0, 0));
        return Err(Error::RegionTooSmall {
            width: w,
            height: h,
            required: min_side,
        });
    }
    let mut counts = [0.0; 4];
    for g in usable {
        for (c, v) in counts.iter_mut().zip(dbc_counts(g)) {
            *c += v;
        }
    }
    // least-squares slope of ln N(s) against ln(1/s)
    let xs: Vec<f64> = DBC_SIZES.iter().map(|&s| -(s as f64).ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|c| c.ln()).collect();
    let mx = xs.iter().sum::<f64>() / 4.0;
    let my = ys.iter().sum::<f64>() / 4.0;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok((sxy / sxx).clamp(2.0, 3.0))
}

/// (mean, population std, Fisher skewness); skewness is 0 when std is 0.
pub fn intensity_stats(pixels: &[f64]) -> Result<(f64, f64, f64)> {
    if pixels.is_empty() {
        return Err(Error::InsufficientData("empty band".into()));
    }
    let n = pixels.len() as f64;
    let mean = pixels.iter().sum::<f64>() / n;
    let m2 = pixels.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = pixels.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    let std = m2.sqrt();
    let skew = if std > 0.0 { m3 / std.powi(3) } else { 0.0 };
    Ok((mean, std, skew))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SclerosisFeatures {
    /// (entropy, energy) for radius 1, 2, 3.
    pub lbp: [Option<f64>; 6],
    /// contrast, correlation, energy, homogeneity, entropy.
    pub glcm: [Option<f64>; 5],
    pub fractal_dim: Option<f64>,
    /// mean, std, skewness for medial then lateral.
    pub intensity: [Option<f64>; 6],
    pub quality: Quality,
}

impl SclerosisFeatures {
    pub fn to_slots(&self) -> [Option<f64>; SCLEROSIS_DIMS] {
        let mut out = [None; SCLEROSIS_DIMS];
        out[..6].copy_from_slice(&self.lbp);
        out[6..11].copy_from_slice(&self.glcm);
        out[11] = self.fractal_dim;
        out[12..].copy_from_slice(&self.intensity);
        out
    }
}

/// Intermediate values kept for the audit trail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextureAudit {
    pub lbp_histograms: Vec<Option<Vec<f64>>>,
    pub field_sizes: Vec<(usize, usize)>,
}

/// Sclerosis sub-vector from precomputed bands (`[medial, lateral]`) on an
/// image preprocessed for the sclerosis stage.
pub fn sclerosis_from_bands(img: &Grid, bands: [Option<&SubchondralBand>; 2]) -> (SclerosisFeatures, TextureAudit) {
    let fields: Vec<Grid> = bands
        .iter()
        .flatten()
        .map(|b| b.field(img))
        .filter(|f| !f.is_empty())
        .collect();
    let mut lbp = [None; 6];
    let mut histograms = Vec::new();
    for (k, &r) in LBP_RADII.iter().enumerate() {
        match lbp_histogram(&fields, r) {
            Ok(h) => {
                let (e, en) = entropy_energy(&h);
                lbp[2 * k] = Some(e);
                lbp[2 * k + 1] = Some(en);
                histograms.push(Some(h.to_vec()));
            }
            Err(_) => histograms.push(None),
        }
    }
    let glcm = match glcm_features(&fields) {
        Ok(s) => s.to_array().map(Some),
        Err(_) => [None; 5],
    };
    let fractal_dim = fractal_dimension(&fields).ok();
    let mut intensity = [None; 6];
    for (k, band) in bands.iter().enumerate() {
        if let Some(b) = band {
            if let Ok((m, s, sk)) = intensity_stats(&b.pixels(img)) {
                intensity[3 * k] = Some(m);
                intensity[3 * k + 1] = Some(s);
                intensity[3 * k + 2] = Some(sk);
            }
        }
    }
    let quality = Quality::from_presence(intensity[0].is_some(), intensity[3].is_some());
    (
        SclerosisFeatures {
            lbp,
            glcm,
            fractal_dim,
            intensity,
            quality,
        },
        TextureAudit {
            lbp_histograms: histograms,
            field_sizes: fields.iter().map(|f| (f.width(), f.height())).collect(),
        },
    )
}

/// Sclerosis sub-vector of an image preprocessed for the sclerosis stage.
pub fn sclerosis_subvector(img: &Grid, mask: &LabelMask) -> SclerosisFeatures {
    let med = subchondral_band(mask, Compartment::Medial, SUBCHONDRAL_DEPTH).ok();
    let lat = subchondral_band(mask, Compartment::Lateral, SUBCHONDRAL_DEPTH).ok();
    sclerosis_from_bands(img, [med.as_ref(), lat.as_ref()]).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{band_mask, BandSpec};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn noise(w: usize, h: usize, seed: u64) -> Grid {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Grid::from_fn(w, h, |_, _| rng.gen_range(0..256) as f64 / 255.0)
    }

    #[test]
    fn riu2_codes() {
        assert_eq!(riu2_code(0), 0);
        assert_eq!(riu2_code(0xFF), 8);
        assert_eq!(riu2_code(0b0000_0111), 3);
        assert_eq!(riu2_code(0b1000_0011), 3);
        assert_eq!(riu2_code(0b0101_0101), 9);
    }

    #[test]
    fn lbp_constant_field() {
        let g = Grid::new(20, 20, 0.4);
        for r in LBP_RADII {
            let h = lbp_histogram(&[g.clone()], r).unwrap();
            assert_eq!(h[8], 1.0);
            assert_eq!(lbp_features(&[g.clone()], r).unwrap(), (0.0, 1.0));
        }
    }

    #[test]
    fn entropy_of_uniform_histogram() {
        let (e, en) = entropy_energy(&[0.1; 10]);
        assert!((e - 10f64.ln()).abs() < 1e-12);
        assert!((en - 0.1).abs() < 1e-12);
    }

    #[test]
    fn lbp_vertical_stripes_by_enumeration() {
        let g = Grid::from_fn(8, 8, |x, _| (x % 2) as f64);
        // oracle: neighbour values written out per pixel from the stripe formula
        let stripe = |x: f64| -> f64 {
            let x0 = x.floor();
            let f = x - x0;
            let v0 = (x0 as i64 % 2) as f64;
            let v1 = ((x0 as i64 + 1) % 2) as f64;
            v0 + (v1 - v0) * f
        };
        let mut hist = [0.0; LBP_BINS];
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let dxs = [1.0, s, 0.0, -s, -1.0, -s, 0.0, s];
        let mut count = 0.0;
        for _y in 1..7 {
            for x in 1..7 {
                let c = (x % 2) as f64;
                let mut bits = 0u8;
                for (p, dx) in dxs.iter().enumerate() {
                    if stripe(x as f64 + dx) >= c - 1e-12 {
                        bits |= 1 << p;
                    }
                }
                // pattern table: even columns -> all ones, odd columns -> 0b0100_0100
                let expected = if x % 2 == 0 { 0xFF } else { 0b0100_0100 };
                assert_eq!(bits, expected);
                hist[riu2_code(bits)] += 1.0;
                count += 1.0;
            }
        }
        hist.iter_mut().for_each(|v| *v /= count);
        let got = lbp_histogram(&[g], 1).unwrap();
        for (a, b) in got.iter().zip(&hist) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(got[8], 0.5);
        assert_eq!(got[9], 0.5);
    }

    #[test]
    fn lbp_too_small() {
        assert!(lbp_histogram(&[Grid::new(6, 6, 0.0)], 3).is_err());
        assert!(lbp_histogram(&[Grid::new(7, 7, 0.0)], 3).is_ok());
    }

    #[test]
    fn glcm_constant() {
        let s = glcm_features(&[Grid::new(10, 6, 0.7)]).unwrap();
        assert_eq!(s.to_array(), [0.0, 0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn glcm_checkerboard_contrast() {
        // adjacent levels 10 and 11
        let g = Grid::from_fn(8, 8, |x, y| if (x + y) % 2 == 0 { 10.5 / 32.0 } else { 11.5 / 32.0 });
        let p = glcm_matrix(&[g], (1, 0)).unwrap();
        let s = GlcmStats::from_matrix(&p);
        assert!((s.contrast - 1.0).abs() < 1e-12);
        assert!((p[10 * 32 + 11] - 0.5).abs() < 1e-12);
        assert!((p[11 * 32 + 10] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn glcm_toy_by_hand() {
        let levels = [[0, 0, 1, 1], [0, 0, 1, 1], [0, 2, 2, 2], [2, 2, 3, 3]];
        let g = Grid::from_fn(4, 4, |x, y| (levels[y][x] as f64 + 0.5) / 32.0);
        // definitional oracle on a 4-level matrix
        let mut avg = [[0.0f64; 4]; 4];
        for (dx, dy) in GLCM_OFFSETS {
            let mut m = [[0.0f64; 4]; 4];
            let mut total = 0.0;
            for y in 0..4i64 {
                for x in 0..4i64 {
                    let (nx, ny) = (x + dx, y + dy);
                    if (0..4).contains(&nx) && (0..4).contains(&ny) {
                        let (i, j) = (levels[y as usize][x as usize], levels[ny as usize][nx as usize]);
                        m[i][j] += 1.0;
                        m[j][i] += 1.0;
                        total += 2.0;
                    }
                }
            }
            for i in 0..4 {
                for j in 0..4 {
                    avg[i][j] += m[i][j] / total / 4.0;
                }
            }
        }
        let (mut contrast, mut hom, mut energy, mut entropy, mut mu) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..4 {
            for j in 0..4 {
                let p = avg[i][j];
                let d = (i as f64 - j as f64).powi(2);
                contrast += d * p;
                hom += p / (1.0 + d);
                energy += p * p;
                if p > 0.0 {
                    entropy -= p * p.ln();
                }
                mu += i as f64 * p;
            }
        }
        let (mut var, mut cov) = (0.0, 0.0);
        for i in 0..4 {
            for j in 0..4 {
                var += (i as f64 - mu).powi(2) * avg[i][j];
                cov += (i as f64 - mu) * (j as f64 - mu) * avg[i][j];
            }
        }
        let corr = cov / var;
        let s = glcm_features(&[g]).unwrap();
        let expect = [contrast, corr, energy, hom, entropy];
        for (a, b) in s.to_array().iter().zip(expect) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn fractal_flat_is_two() {
        assert_eq!(fractal_dimension(&[Grid::new(16, 16, 0.3)]).unwrap(), 2.0);
        assert_eq!(fractal_dimension(&[Grid::new(56, 28, 0.9)]).unwrap(), 2.0);
    }

    #[test]
    fn fractal_checkerboard_by_hand() {
        let g = Grid::from_fn(16, 16, |x, y| ((x + y) % 2) as f64);
        // per-cell counts: s=2 -> 9, s=4 -> 5, s=8 -> 3, s=16 -> 2
        let n = [64.0 * 9.0, 16.0 * 5.0, 4.0 * 3.0, 2.0f64];
        let xs = [2.0f64, 4.0, 8.0, 16.0].map(|s| -s.ln());
        let ys = n.map(|v| v.ln());
        let mx = xs.iter().sum::<f64>() / 4.0;
        let my = ys.iter().sum::<f64>() / 4.0;
        let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
            / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
        let fd = fractal_dimension(&[g]).unwrap();
        assert!((fd - slope).abs() < 1e-12);
        assert!(fd > 2.5 && fd <= 3.0);
    }

    #[test]
    fn fractal_too_small() {
        assert!(fractal_dimension(&[Grid::new(15, 40, 0.0)]).is_err());
    }

    #[test]
    fn intensity_moments() {
        assert_eq!(intensity_stats(&[0.5; 9]).unwrap(), (0.5, 0.0, 0.0));
        assert_eq!(intensity_stats(&[0.0, 1.0, 0.0, 1.0]).unwrap(), (0.5, 0.5, 0.0));
        let (m, s, sk) = intensity_stats(&[0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(m, 0.25);
        assert!((s - 0.1875f64.sqrt()).abs() < 1e-15);
        // m3 = (3 * (-0.25)^3 + 0.75^3) / 4 = 0.09375
        assert!((sk - 0.09375 / 0.1875f64.powf(1.5)).abs() < 1e-12);
    }

    #[test]
    fn constant_image_subvector() {
        let mask = band_mask(&BandSpec::symmetric(10, 10));
        let img = Grid::new(224, 224, 0.5);
        let f = sclerosis_subvector(&img, &mask);
        let got: Vec<f64> = f.to_slots().iter().map(|v| v.unwrap()).collect();
        let expected = [
            0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 2.0, 0.5, 0.0, 0.0, 0.5, 0.0, 0.0,
        ];
        assert_eq!(got, expected);
        assert_eq!(f.quality, Quality::Measured);
    }

    #[test]
    fn empty_mask_subvector() {
        let f = sclerosis_subvector(&Grid::new(224, 224, 0.5), &LabelMask::new(224, 224));
        assert!(f.to_slots().iter().all(Option::is_none));
        assert_eq!(f.quality, Quality::ImputedBoth);
    }

    #[test]
    fn subvector_is_composition_of_descriptors() {
        let mask = band_mask(&BandSpec::symmetric(10, 12));
        let img = noise(224, 224, 3);
        let f = sclerosis_subvector(&img, &mask);
        let bm = subchondral_band(&mask, Compartment::Medial, 28).unwrap();
        let bl = subchondral_band(&mask, Compartment::Lateral, 28).unwrap();
        let fields = [bm.field(&img), bl.field(&img)];
        let mut expected = Vec::new();
        for r in LBP_RADII {
            let (e, en) = lbp_features(&fields, r).unwrap();
            expected.extend([e, en]);
        }
        expected.extend(glcm_features(&fields).unwrap().to_array());
        expected.push(fractal_dimension(&fields).unwrap());
        for b in [&bm, &bl] {
            let (m, s, k) = intensity_stats(&b.pixels(&img)).unwrap();
            expected.extend([m, s, k]);
        }
        let got: Vec<f64> = f.to_slots().iter().map(|v| v.unwrap()).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn golden_vector_is_stable() {
        let mask = band_mask(&BandSpec::symmetric(8, 9));
        let img = Grid::from_fn(224, 224, |x, y| ((x * 37 + y * 91 + x * y) % 251) as f64 / 250.0);
        let bits: Vec<u64> = sclerosis_subvector(&img, &mask)
            .to_slots()
            .iter()
            .map(|v| v.unwrap().to_bits())
            .collect();
        let again: Vec<u64> = sclerosis_subvector(&img, &mask)
            .to_slots()
            .iter()
            .map(|v| v.unwrap().to_bits())
            .collect();
        assert_eq!(bits, again);
        assert_eq!(bits.len(), 18);
    }

    proptest! {
        #[test]
        fn lbp_invariant_to_positive_affine(seed in 0u64..300, a_pow in -1i32..=1, b_steps in 0i32..32) {
            // dyadic intensities keep every shifted value exactly representable
            let g = noise(24, 20, seed).map(|v| (v * 255.0).round() / 256.0);
            let a = 2f64.powi(a_pow);
            let b = b_steps as f64 / 256.0;
            let h = g.map(|v| a * v + b);
            for r in LBP_RADII {
                prop_assert_eq!(lbp_histogram(&[g.clone()], r).unwrap(), lbp_histogram(&[h.clone()], r).unwrap());
            }
        }

        #[test]
        fn descriptors_translation_invariant(seed in 0u64..200, dx in 0usize..30, dy in 0usize..40) {
            let mask = band_mask(&BandSpec::symmetric(10, 10));
            let spec = BandSpec { top_med: 100 + dy, top_lat: 100 + dy, med_cols: (30 + dx, 100 + dx), lat_cols: (123 + dx, 193 + dx), ..BandSpec::symmetric(10, 10) };
            let moved = band_mask(&spec);
            let base = noise(224, 224, seed);
            // shift the image content with the mask
            let shifted = Grid::from_fn(224, 224, |x, y| {
                if x >= dx && y >= dy { base.get(x - dx, y - dy) } else { 0.0 }
            });
            let a = sclerosis_subvector(&base, &mask).to_slots();
            let b = sclerosis_subvector(&shifted, &moved).to_slots();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn glcm_energy_entropy_relation(seed in 0u64..300, levels in 1usize..6) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = Grid::from_fn(12, 9, |_, _| rng.gen_range(0..levels) as f64 / 32.0 + 0.001);
            let s = glcm_features(&[g]).unwrap();
            prop_assert!(s.energy > 0.0 && s.energy <= 1.0 + 1e-12);
            prop_assert!(s.entropy >= 0.0);
            prop_assert!(s.homogeneity > 0.0 && s.homogeneity <= 1.0 + 1e-12);
            prop_assert_eq!(s.entropy == 0.0, (s.energy - 1.0).abs() < 1e-12);
        }

        #[test]
        fn fractal_within_bounds(seed in 0u64..300, w in 16usize..60, h in 16usize..40) {
            let fd = fractal_dimension(&[noise(w, h, seed)]).unwrap();
            prop_assert!((2.0..=3.0).contains(&fd));
        }
    }
}
