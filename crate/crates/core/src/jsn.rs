//! Joint-space quantification from compartment masks.
//!
//! Each compartment's label region is reduced to a femoral (upper) and tibial
//! (lower) boundary per column. Sixteen equidistant stations are placed on the
//! span after trimming its ends, the width at a station is the vertical
//! distance between the boundaries at that column, and the minimum joint
//! space width is the smallest station width.

use serde::{Deserialize, Serialize};

use crate::dataio::{LabelMask, LABEL_LATERAL, LABEL_MEDIAL};
use crate::error::{Error, Result};
use crate::stats::median;

pub const STATIONS: usize = 16;
pub const TRIM_FRAC: f64 = 0.10;
/// Below this many labelled pixels a compartment counts as absent.
pub const MIN_COMPARTMENT_PIXELS: usize = 50;
pub const MIN_SPAN_COLUMNS: usize = 20;
pub const JSN_DIMS: usize = 22;
/// Stations kept in the flattened profile (every second one).
pub const PROFILE_PER_COMPARTMENT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Compartment {
    Medial,
    Lateral,
}

impl Compartment {
    pub const BOTH: [Compartment; 2] = [Compartment::Medial, Compartment::Lateral];

    pub fn label(self) -> u8 {
        match self {
            Compartment::Medial => LABEL_MEDIAL,
            Compartment::Lateral => LABEL_LATERAL,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Compartment::Medial => "medial",
            Compartment::Lateral => "lateral",
        }
    }
}

/// Which compartments were measured; missing ones are imputed downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quality {
    Measured,
    ImputedMed,
    ImputedLat,
    ImputedBoth,
}

impl Quality {
    pub fn from_presence(medial: bool, lateral: bool) -> Self {
        match (medial, lateral) {
            (true, true) => Quality::Measured,
            (false, true) => Quality::ImputedMed,
            (true, false) => Quality::ImputedLat,
            (false, false) => Quality::ImputedBoth,
        }
    }
}

/// Upper and lower joint-space boundaries of one compartment, per column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourPair {
    pub compartment: Compartment,
    pub x_min: usize,
    pub x_max: usize,
    /// Row of the upper edge for columns `x_min..=x_max`.
    pub femoral: Vec<f64>,
    /// Row of the lower edge for columns `x_min..=x_max`.
    pub tibial: Vec<f64>,
}

impl ContourPair {
    pub fn columns(&self) -> usize {
        self.x_max - self.x_min + 1
    }

    fn interp(values: &[f64], x_min: usize, x: f64) -> f64 {
        let rel = (x - x_min as f64).clamp(0.0, (values.len() - 1) as f64);
        let i = rel.floor() as usize;
        if i + 1 >= values.len() {
            return values[values.len() - 1];
        }
        let t = rel - i as f64;
        if t == 0.0 {
            values[i]
        } else {
            values[i] + (values[i + 1] - values[i]) * t
        }
    }

    pub fn femoral_at(&self, x: f64) -> f64 {
        Self::interp(&self.femoral, self.x_min, x)
    }

    pub fn tibial_at(&self, x: f64) -> f64 {
        Self::interp(&self.tibial, self.x_min, x)
    }

    /// Span after removing `trim_frac` of its width from each end. The span
    /// is treated as the extent `[x_min, x_max + 1)`, so columns 0..=99 with
    /// a 10% trim give `[10, 90]`.
    pub fn trimmed_span(&self, trim_frac: f64) -> (f64, f64) {
        let n = self.columns() as f64;
        (
            self.x_min as f64 + trim_frac * n,
            (self.x_max + 1) as f64 - trim_frac * n,
        )
    }
}

/// Per-column boundaries of a compartment's label region; columns without
/// labelled pixels inside the span are linearly interpolated.
pub fn extract_contours(mask: &LabelMask, compartment: Compartment) -> Result<ContourPair> {
    let label = compartment.label();
    if mask.count(label) < MIN_COMPARTMENT_PIXELS {
        return Err(Error::CompartmentAbsent(compartment));
    }
    let mut col_min: Vec<Option<usize>> = vec![None; mask.width()];
    let mut col_max: Vec<Option<usize>> = vec![None; mask.width()];
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) == label {
                col_min[x].get_or_insert(y);
                col_max[x] = Some(y);
            }
        }
    }
    let x_min = col_min.iter().position(Option::is_some).unwrap();
    let x_max = col_min.iter().rposition(Option::is_some).unwrap();
    let width = x_max - x_min + 1;
    if width < MIN_SPAN_COLUMNS {
        return Err(Error::SpanTooNarrow {
            compartment,
            width,
            required: MIN_SPAN_COLUMNS,
        });
    }
    let fill = |col: &[Option<usize>]| -> Vec<f64> {
        let mut out = Vec::with_capacity(width);
        let mut last_known = x_min;
        for x in x_min..=x_max {
            match col[x] {
                Some(v) => {
                    out.push(v as f64);
                    last_known = x;
                }
                None => {
                    let next = (x + 1..=x_max).find(|&k| col[k].is_some()).unwrap();
                    let (a, b) = (col[last_known].unwrap() as f64, col[next].unwrap() as f64);
                    let t = (x - last_known) as f64 / (next - last_known) as f64;
                    out.push(a + (b - a) * t);
                }
            }
        }
        out
    };
    Ok(ContourPair {
        compartment,
        x_min,
        x_max,
        femoral: fill(&col_min),
        tibial: fill(&col_max),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub x: f64,
    pub f_y: f64,
    pub t_y: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkProfile {
    pub compartment: Compartment,
    pub stations: Vec<Station>,
}

impl LandmarkProfile {
    pub fn widths(&self) -> impl Iterator<Item = f64> + '_ {
        self.stations.iter().map(|s| s.width)
    }

    /// Index of the (first) narrowest station.
    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (i, s) in self.stations.iter().enumerate() {
            if s.width < self.stations[best].width {
                best = i;
            }
        }
        best
    }

    /// Widths at stations 1, 3, ..., 15 (1-based).
    pub fn profile_samples(&self) -> impl Iterator<Item = f64> + '_ {
        self.stations.iter().step_by(2).map(|s| s.width)
    }
}

/// `n` equidistant stations (inclusive endpoints) on the trimmed span.
pub fn sample_landmarks(contours: &ContourPair, n: usize, trim_frac: f64) -> Result<LandmarkProfile> {
    let (lo, hi) = contours.trimmed_span(trim_frac);
    let available = (hi - lo).floor() as usize + 1;
    if n < 2 || hi <= lo || available < n {
        return Err(Error::SpanTooNarrow {
            compartment: contours.compartment,
            width: available,
            required: n,
        });
    }
    let step = (hi - lo) / (n - 1) as f64;
    let stations = (0..n)
        .map(|i| {
            let x = if i == n - 1 { hi } else { lo + step * i as f64 };
            let f_y = contours.femoral_at(x);
            let t_y = contours.tibial_at(x);
            Station {
                x,
                f_y,
                t_y,
                width: (t_y - f_y).max(0.0),
            }
        })
        .collect();
    Ok(LandmarkProfile {
        compartment: contours.compartment,
        stations,
    })
}

/// Minimum joint space width over the stations.
pub fn mjsw(profile: &LandmarkProfile) -> f64 {
    profile.widths().fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompartmentMeasurement {
    pub contours: ContourPair,
    pub profile: LandmarkProfile,
    pub mjsw: f64,
}

pub fn measure_compartment(mask: &LabelMask, compartment: Compartment) -> Result<CompartmentMeasurement> {
    let contours = extract_contours(mask, compartment)?;
    let profile = sample_landmarks(&contours, STATIONS, TRIM_FRAC)?;
    let mjsw = mjsw(&profile);
    Ok(CompartmentMeasurement {
        contours,
        profile,
        mjsw,
    })
}

/// Raw per-compartment measurements, before normalization against the KL-0
/// reference.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct JsnMeasurement {
    pub medial: Option<CompartmentMeasurement>,
    pub lateral: Option<CompartmentMeasurement>,
}

impl JsnMeasurement {
    pub fn measure(mask: &LabelMask) -> Self {
        let get = |c| match measure_compartment(mask, c) {
            Ok(m) => Some(m),
            Err(e) => {
                log::debug!("{e}");
                None
            }
        };
        JsnMeasurement {
            medial: get(Compartment::Medial),
            lateral: get(Compartment::Lateral),
        }
    }

    pub fn get(&self, c: Compartment) -> Option<&CompartmentMeasurement> {
        match c {
            Compartment::Medial => self.medial.as_ref(),
            Compartment::Lateral => self.lateral.as_ref(),
        }
    }

    pub fn quality(&self) -> Quality {
        Quality::from_presence(self.medial.is_some(), self.lateral.is_some())
    }
}

/// Median minimum width of KL-0 training knees, per compartment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kl0Reference {
    pub median_mjsw_med: f64,
    pub median_mjsw_lat: f64,
    pub n_images: usize,
}

impl Kl0Reference {
    /// Fits from the mJSW values of measured compartments. The caller is
    /// responsible for restricting the inputs to KL-0 training images.
    pub fn from_values(medial: &[f64], lateral: &[f64], n_images: usize) -> Result<Self> {
        if medial.is_empty() {
            return Err(Error::NoKl0Reference(Compartment::Medial));
        }
        if lateral.is_empty() {
            return Err(Error::NoKl0Reference(Compartment::Lateral));
        }
        let reference = Kl0Reference {
            median_mjsw_med: median(medial),
            median_mjsw_lat: median(lateral),
            n_images,
        };
        if !(reference.median_mjsw_med > 0.0 && reference.median_mjsw_lat > 0.0) {
            return Err(Error::ZeroReference);
        }
        Ok(reference)
    }

    pub fn fit<'a>(measurements: impl IntoIterator<Item = &'a JsnMeasurement>) -> Result<Self> {
        let mut med = Vec::new();
        let mut lat = Vec::new();
        let mut n = 0;
        for m in measurements {
            n += 1;
            if let Some(c) = &m.medial {
                med.push(c.mjsw);
            }
            if let Some(c) = &m.lateral {
                lat.push(c.mjsw);
            }
        }
        Self::from_values(&med, &lat, n)
    }

    pub fn median(&self, c: Compartment) -> f64 {
        match c {
            Compartment::Medial => self.median_mjsw_med,
            Compartment::Lateral => self.median_mjsw_lat,
        }
    }
}

/// Narrowing rate in percent relative to the KL-0 median; negative when the
/// joint is wider than the reference.
pub fn jsn_rate(mjsw_c: f64, reference: &Kl0Reference, compartment: Compartment) -> Result<f64> {
    let m = reference.median(compartment);
    if !(m > 0.0) {
        return Err(Error::ZeroReference);
    }
    Ok(100.0 * (1.0 - mjsw_c / m))
}

/// `|med - lat| / (med + lat)`, defined as 0 when both widths are 0.
pub fn asymmetry(mjsw_med: f64, mjsw_lat: f64) -> f64 {
    let sum = mjsw_med + mjsw_lat;
    if sum <= 0.0 {
        return 0.0;
    }
    (mjsw_med - mjsw_lat).abs() / sum
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsnFeatures {
    pub mjsw_med: Option<f64>,
    pub mjsw_lat: Option<f64>,
    /// 8 medial then 8 lateral station widths.
    pub profile: [Option<f64>; 16],
    pub jsn_rate_med: Option<f64>,
    pub jsn_rate_lat: Option<f64>,
    pub ml_ratio: Option<f64>,
    pub asymmetry: Option<f64>,
    pub quality: Quality,
}

impl JsnFeatures {
    pub fn from_measurement(m: &JsnMeasurement, reference: &Kl0Reference) -> Result<Self> {
        let mut profile = [None; 16];
        for (k, c) in Compartment::BOTH.into_iter().enumerate() {
            if let Some(cm) = m.get(c) {
                for (i, w) in cm.profile.profile_samples().enumerate() {
                    profile[k * PROFILE_PER_COMPARTMENT + i] = Some(w);
                }
            }
        }
        let med = m.medial.as_ref().map(|c| c.mjsw);
        let lat = m.lateral.as_ref().map(|c| c.mjsw);
        let rate = |v: Option<f64>, c| v.map(|v| jsn_rate(v, reference, c)).transpose();
        let (ml_ratio, asym) = match (med, lat) {
            (Some(a), Some(b)) => (Some(if b == 0.0 { 0.0 } else { a / b }), Some(asymmetry(a, b))),
            _ => (None, None),
        };
        Ok(JsnFeatures {
            mjsw_med: med,
            mjsw_lat: lat,
            profile,
            jsn_rate_med: rate(med, Compartment::Medial)?,
            jsn_rate_lat: rate(lat, Compartment::Lateral)?,
            ml_ratio,
            asymmetry: asym,
            quality: m.quality(),
        })
    }

    /// Flattened in the frozen order
    /// `[mjsw_med, mjsw_lat, profile(16), rate_med, rate_lat, ml_ratio, asymmetry]`.
    pub fn to_slots(&self) -> [Option<f64>; JSN_DIMS] {
        let mut out = [None; JSN_DIMS];
        out[0] = self.mjsw_med;
        out[1] = self.mjsw_lat;
        out[2..18].copy_from_slice(&self.profile);
        out[18] = self.jsn_rate_med;
        out[19] = self.jsn_rate_lat;
        out[20] = self.ml_ratio;
        out[21] = self.asymmetry;
        out
    }
}

pub fn jsn_subvector(mask: &LabelMask, reference: &Kl0Reference) -> Result<JsnFeatures> {
    JsnFeatures::from_measurement(&JsnMeasurement::measure(mask), reference)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{band_mask, BandSpec};
    use proptest::prelude::*;

    fn rect_mask(w: usize, h: usize, rows: (usize, usize), cols: (usize, usize), label: u8) -> LabelMask {
        let mut m = LabelMask::new(w, h);
        for y in rows.0..=rows.1 {
            for x in cols.0..=cols.1 {
                m.set(x, y, label);
            }
        }
        m
    }

    #[test]
    fn rectangular_band_contours() {
        let m = rect_mask(224, 224, (100, 110), (50, 100), 1);
        let c = extract_contours(&m, Compartment::Medial).unwrap();
        assert_eq!((c.x_min, c.x_max), (50, 100));
        assert!(c.femoral.iter().all(|&v| v == 100.0));
        assert!(c.tibial.iter().all(|&v| v == 110.0));
    }

    #[test]
    fn hole_is_interpolated() {
        let mut m = rect_mask(224, 224, (100, 110), (50, 100), 1);
        for y in 100..=110 {
            m.set(70, y, 0);
        }
        let c = extract_contours(&m, Compartment::Medial).unwrap();
        assert!(c.femoral.iter().all(|&v| v == 100.0));
        assert!(c.tibial.iter().all(|&v| v == 110.0));
    }

    #[test]
    fn wedge_boundaries_match_mask() {
        // height grows 4 -> 12 across columns 40..=139
        let mut m = LabelMask::new(224, 224);
        let mut expected = Vec::new();
        for x in 40..140 {
            let h = 4 + (8 * (x - 40) + 49) / 99;
            for y in 100..=100 + h {
                m.set(x, y, 1);
            }
            expected.push((100.0, (100 + h) as f64));
        }
        let c = extract_contours(&m, Compartment::Medial).unwrap();
        for (i, (f, t)) in expected.iter().enumerate() {
            assert_eq!(c.femoral[i], *f);
            assert_eq!(c.tibial[i], *t);
        }
    }

    #[test]
    fn absent_and_narrow_compartments() {
        let m = LabelMask::new(64, 64);
        assert!(matches!(
            extract_contours(&m, Compartment::Lateral),
            Err(Error::CompartmentAbsent(Compartment::Lateral))
        ));
        let m = rect_mask(64, 64, (10, 20), (5, 14), 2);
        assert!(matches!(
            extract_contours(&m, Compartment::Lateral),
            Err(Error::SpanTooNarrow { .. })
        ));
    }

    #[test]
    fn stations_on_trimmed_span() {
        let m = rect_mask(224, 224, (50, 58), (0, 99), 1);
        let c = extract_contours(&m, Compartment::Medial).unwrap();
        let p = sample_landmarks(&c, 16, 0.10).unwrap();
        assert_eq!(p.stations.len(), 16);
        for (i, s) in p.stations.iter().enumerate() {
            assert!((s.x - (10.0 + 80.0 / 15.0 * i as f64)).abs() < 1e-12);
            assert_eq!(s.width, 8.0);
        }
        assert_eq!(p.stations[15].x, 90.0);
        assert_eq!(mjsw(&p), 8.0);
    }

    #[test]
    fn trimming_suppresses_endpoint_minimum() {
        // interior gap 5; a 2-px pinch in the outer 10% of the span
        let mut m = rect_mask(224, 224, (100, 105), (20, 119), 1);
        for x in 20..26 {
            for y in 102..=105 {
                m.set(x, y, 0);
            }
        }
        let c = extract_contours(&m, Compartment::Medial).unwrap();
        assert_eq!(c.tibial[0], 101.0);
        let p = sample_landmarks(&c, 16, 0.10).unwrap();
        assert_eq!(mjsw(&p), 5.0);
    }

    #[test]
    fn mjsw_is_minimum() {
        let mut p = LandmarkProfile {
            compartment: Compartment::Medial,
            stations: (0..16)
                .map(|i| Station { x: i as f64, f_y: 0.0, t_y: 0.0, width: 5.0 + i as f64 })
                .collect(),
        };
        p.stations[7].width = 3.0;
        assert_eq!(mjsw(&p), 3.0);
        assert_eq!(p.argmin(), 7);
    }

    #[test]
    fn wedge_mjsw_matches_brute_force_over_trimmed_columns() {
        let mut m = LabelMask::new(224, 224);
        let heights: Vec<usize> = (0..100).map(|i| 4 + (8 * i + 49) / 99).collect();
        for (i, &h) in heights.iter().enumerate() {
            for y in 90..=90 + h {
                m.set(30 + i, y, 1);
            }
        }
        let meas = measure_compartment(&m, Compartment::Medial).unwrap();
        let (lo, hi) = meas.contours.trimmed_span(TRIM_FRAC);
        // brute force: minimum per-column height over columns inside the trimmed span
        let oracle = (0..100)
            .filter(|&i| (30 + i) as f64 >= lo.floor() && (30 + i) as f64 <= hi.ceil())
            .map(|i| heights[i] as f64)
            .fold(f64::INFINITY, f64::min);
        assert!((meas.mjsw - oracle).abs() <= 0.5, "{} vs {}", meas.mjsw, oracle);
    }

    #[test]
    fn kl0_medians() {
        let r = Kl0Reference::from_values(&[8.0, 10.0, 12.0], &[8.0, 10.0], 3).unwrap();
        assert_eq!(r.median_mjsw_med, 10.0);
        assert_eq!(r.median_mjsw_lat, 9.0);
        assert!(matches!(
            Kl0Reference::from_values(&[], &[1.0], 0),
            Err(Error::NoKl0Reference(Compartment::Medial))
        ));
        assert!(matches!(Kl0Reference::from_values(&[0.0], &[1.0], 1), Err(Error::ZeroReference)));
    }

    #[test]
    fn kl0_median_of_noisy_phantoms() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let measurements: Vec<JsnMeasurement> = (0..100)
            .map(|_| {
                let g_med = rng.gen_range(9..=11);
                let g_lat = rng.gen_range(9..=11);
                JsnMeasurement::measure(&band_mask(&BandSpec::symmetric(g_med, g_lat)))
            })
            .collect();
        let r = Kl0Reference::fit(&measurements).unwrap();
        assert!((9.0..=11.0).contains(&r.median_mjsw_med));
        assert!((9.0..=11.0).contains(&r.median_mjsw_lat));
        assert_eq!(r.n_images, 100);
    }

    #[test]
    fn rate_and_asymmetry_by_hand() {
        let r = Kl0Reference { median_mjsw_med: 10.0, median_mjsw_lat: 8.0, n_images: 1 };
        assert_eq!(jsn_rate(10.0, &r, Compartment::Medial).unwrap(), 0.0);
        assert_eq!(jsn_rate(0.0, &r, Compartment::Medial).unwrap(), 100.0);
        assert_eq!(jsn_rate(7.5, &r, Compartment::Medial).unwrap(), 25.0);
        assert!(jsn_rate(12.0, &r, Compartment::Lateral).unwrap() < 0.0);
        let zero = Kl0Reference { median_mjsw_med: 0.0, ..r };
        assert!(jsn_rate(1.0, &zero, Compartment::Medial).is_err());

        assert_eq!(asymmetry(4.0, 4.0), 0.0);
        assert_eq!(asymmetry(3.0, 1.0), 0.5);
        assert_eq!(asymmetry(5.0, 0.0), 1.0);
        assert_eq!(asymmetry(0.0, 0.0), 0.0);
    }

    #[test]
    fn parallel_band_subvector() {
        let mask = band_mask(&BandSpec::symmetric(10, 10));
        let r = Kl0Reference { median_mjsw_med: 10.0, median_mjsw_lat: 10.0, n_images: 1 };
        let f = jsn_subvector(&mask, &r).unwrap();
        let slots = f.to_slots();
        let mut expected = vec![10.0, 10.0];
        expected.extend([10.0; 16]);
        expected.extend([0.0, 0.0, 1.0, 0.0]);
        let got: Vec<f64> = slots.iter().map(|s| s.unwrap()).collect();
        assert_eq!(got, expected);
        assert_eq!(f.quality, Quality::Measured);
    }

    #[test]
    fn empty_mask_subvector_is_all_missing() {
        let r = Kl0Reference { median_mjsw_med: 10.0, median_mjsw_lat: 10.0, n_images: 1 };
        let f = jsn_subvector(&LabelMask::new(224, 224), &r).unwrap();
        assert_eq!(f.quality, Quality::ImputedBoth);
        assert!(f.to_slots().iter().all(Option::is_none));
    }

    #[test]
    fn wedge_medial_parallel_lateral() {
        let mut m = LabelMask::new(224, 224);
        let heights: Vec<usize> = (0..80).map(|i| 12 - (8 * i + 39) / 79).collect();
        for (i, &h) in heights.iter().enumerate() {
            for y in 100..=100 + h {
                m.set(20 + i, y, 1);
            }
        }
        for x in 120..200 {
            for y in 100..=108 {
                m.set(x, y, 2);
            }
        }
        let r = Kl0Reference { median_mjsw_med: 10.0, median_mjsw_lat: 10.0, n_images: 1 };
        let f = jsn_subvector(&m, &r).unwrap();
        // brute force over the columns covered by the trimmed span [28, 92]
        let oracle = (8..=72).map(|i| heights[i] as f64).fold(f64::INFINITY, f64::min);
        let med = f.mjsw_med.unwrap();
        assert!((med - oracle).abs() <= 0.5, "{med} vs {oracle}");
        assert_eq!(f.mjsw_lat, Some(8.0));
        let hand = (med - 8.0).abs() / (med + 8.0);
        assert!((f.asymmetry.unwrap() - hand).abs() < 1e-12);
    }

    #[test]
    fn zero_lateral_width_gives_zero_ratio() {
        let mut m = rect_mask(224, 224, (100, 110), (20, 100), 1);
        for x in 120..200 {
            m.set(x, 100, 2);
        }
        let r = Kl0Reference { median_mjsw_med: 10.0, median_mjsw_lat: 10.0, n_images: 1 };
        let f = jsn_subvector(&m, &r).unwrap();
        assert_eq!(f.mjsw_lat, Some(0.0));
        assert_eq!(f.ml_ratio, Some(0.0));
        assert_eq!(f.asymmetry, Some(1.0));
    }

    proptest! {
        #[test]
        fn parallel_band_fidelity(g_med in 4usize..=20, g_lat in 4usize..=20, top in 60usize..120) {
            let spec = BandSpec { top_med: top, top_lat: top + 3, ..BandSpec::symmetric(g_med, g_lat) };
            let m = JsnMeasurement::measure(&band_mask(&spec));
            prop_assert!((m.medial.as_ref().unwrap().mjsw - g_med as f64).abs() <= 0.5);
            prop_assert!((m.lateral.as_ref().unwrap().mjsw - g_lat as f64).abs() <= 0.5);
        }

        #[test]
        fn translation_invariance(dx in 0usize..30, dy in 0usize..30, g in 4usize..15) {
            let base = BandSpec::symmetric(g, g + 2);
            let shifted = BandSpec {
                top_med: base.top_med + dy,
                top_lat: base.top_lat + dy,
                med_cols: (base.med_cols.0 + dx, base.med_cols.1 + dx),
                lat_cols: (base.lat_cols.0 + dx, base.lat_cols.1 + dx),
                ..base.clone()
            };
            let a = JsnMeasurement::measure(&band_mask(&base));
            let b = JsnMeasurement::measure(&band_mask(&shifted));
            for c in Compartment::BOTH {
                let wa: Vec<f64> = a.get(c).unwrap().profile.widths().collect();
                let wb: Vec<f64> = b.get(c).unwrap().profile.widths().collect();
                prop_assert_eq!(wa, wb);
            }
        }

        #[test]
        fn reflection_swaps_compartments(g_med in 4usize..=20, g_lat in 4usize..=20) {
            let r = Kl0Reference { median_mjsw_med: 9.0, median_mjsw_lat: 9.0, n_images: 1 };
            let mask = band_mask(&BandSpec::symmetric(g_med, g_lat));
            let a = jsn_subvector(&mask, &r).unwrap();
            let b = jsn_subvector(&mask.reflected(), &r).unwrap();
            prop_assert_eq!(a.mjsw_med, b.mjsw_lat);
            prop_assert_eq!(a.mjsw_lat, b.mjsw_med);
            prop_assert_eq!(a.asymmetry, b.asymmetry);
            let min_a = a.mjsw_med.unwrap().min(a.mjsw_lat.unwrap());
            let min_b = b.mjsw_med.unwrap().min(b.mjsw_lat.unwrap());
            prop_assert_eq!(min_a, min_b);
        }

        #[test]
        fn mjsw_bounds_profile(heights in proptest::collection::vec(2usize..15, 40..90)) {
            let mut m = LabelMask::new(224, 224);
            for (i, &h) in heights.iter().enumerate() {
                for y in 80..=80 + h {
                    m.set(10 + i, y, 1);
                }
            }
            let meas = measure_compartment(&m, Compartment::Medial).unwrap();
            prop_assert!(meas.profile.widths().all(|w| meas.mjsw <= w));
            prop_assert!(meas.profile.stations.windows(2).all(|s| s[0].x < s[1].x));
        }

        #[test]
        fn rate_strictly_decreasing(a in 0.0f64..30.0, d in 0.001f64..10.0) {
            let r = Kl0Reference { median_mjsw_med: 10.0, median_mjsw_lat: 10.0, n_images: 1 };
            prop_assert!(jsn_rate(a + d, &r, Compartment::Medial).unwrap() < jsn_rate(a, &r, Compartment::Medial).unwrap());
        }
    }
}
