//! The 50-dimensional structured vector: assembly, imputation, z-scoring and
//! inference-time interventions.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::Split;
use crate::error::{Error, Result};
use crate::jsn::{JsnFeatures, JSN_DIMS};
use crate::stats;
use crate::texture::{SclerosisFeatures, SCLEROSIS_DIMS};

pub const OSTEOPHYTE_DIMS: usize = 10;
pub const FEATURE_COUNT: usize = JSN_DIMS + OSTEOPHYTE_DIMS + SCLEROSIS_DIMS;
pub const STD_FLOOR: f64 = 1e-8;

/// Column names in vector order.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "jsn_01", "jsn_02", "jsn_03", "jsn_04", "jsn_05", "jsn_06", "jsn_07", "jsn_08", "jsn_09", "jsn_10", "jsn_11",
    "jsn_12", "jsn_13", "jsn_14", "jsn_15", "jsn_16", "jsn_17", "jsn_18", "jsn_19", "jsn_20", "jsn_21", "jsn_22",
    "osp_01", "osp_02", "osp_03", "osp_04", "osp_05", "osp_06", "osp_07", "osp_08", "osp_09", "osp_10", "scl_01",
    "scl_02", "scl_03", "scl_04", "scl_05", "scl_06", "scl_07", "scl_08", "scl_09", "scl_10", "scl_11", "scl_12",
    "scl_13", "scl_14", "scl_15", "scl_16", "scl_17", "scl_18",
];

/// Human-readable meaning of each column, same order as `FEATURE_NAMES`.
pub const FEATURE_DESCRIPTIONS: [&str; FEATURE_COUNT] = [
    "medial minimum joint space width (px)",
    "lateral minimum joint space width (px)",
    "medial width at station 0",
    "medial width at station 2",
    "medial width at station 4",
    "medial width at station 6",
    "medial width at station 8",
    "medial width at station 10",
    "medial width at station 12",
    "medial width at station 14",
    "lateral width at station 0",
    "lateral width at station 2",
    "lateral width at station 4",
    "lateral width at station 6",
    "lateral width at station 8",
    "lateral width at station 10",
    "lateral width at station 12",
    "lateral width at station 14",
    "medial narrowing rate vs KL0 reference",
    "lateral narrowing rate vs KL0 reference",
    "medial/lateral mJSW ratio",
    "medial-lateral asymmetry",
    "osteophyte grade, medial femur",
    "osteophyte grade, lateral femur",
    "osteophyte grade, medial tibia",
    "osteophyte grade, lateral tibia",
    "osteophyte total burden",
    "osteophyte maximum site grade",
    "osteophyte femoral sum",
    "osteophyte tibial sum",
    "osteophyte medial sum",
    "osteophyte lateral sum",
    "LBP entropy, radius 1",
    "LBP energy, radius 1",
    "LBP entropy, radius 2",
    "LBP energy, radius 2",
    "LBP entropy, radius 3",
    "LBP energy, radius 3",
    "GLCM contrast",
    "GLCM correlation",
    "GLCM energy",
    "GLCM homogeneity",
    "GLCM entropy",
    "fractal dimension",
    "medial subchondral mean",
    "medial subchondral std",
    "medial subchondral skewness",
    "lateral subchondral mean",
    "lateral subchondral std",
    "lateral subchondral skewness",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Jsn,
    Osp,
    Scl,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Jsn, Family::Osp, Family::Scl];

    pub fn range(self) -> Range<usize> {
        match self {
            Family::Jsn => 0..JSN_DIMS,
            Family::Osp => JSN_DIMS..JSN_DIMS + OSTEOPHYTE_DIMS,
            Family::Scl => JSN_DIMS + OSTEOPHYTE_DIMS..FEATURE_COUNT,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Jsn => "jsn",
            Family::Osp => "osp",
            Family::Scl => "scl",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Family::Jsn => "JSN",
            Family::Osp => "Osteophyte",
            Family::Scl => "Sclerosis",
        }
    }

    pub fn of_column(j: usize) -> Family {
        Family::ALL.into_iter().find(|f| f.range().contains(&j)).expect("column in range")
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A family, or every feature at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Family(Family),
    All,
}

impl Target {
    pub const ALL: [Target; 4] = [
        Target::Family(Family::Jsn),
        Target::Family(Family::Osp),
        Target::Family(Family::Scl),
        Target::All,
    ];

    pub fn columns(self) -> Range<usize> {
        match self {
            Target::Family(f) => f.range(),
            Target::All => 0..FEATURE_COUNT,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Target::Family(f) => f.as_str(),
            Target::All => "all",
        }
    }
}

impl FromStr for Target {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsn" => Ok(Target::Family(Family::Jsn)),
            "osp" | "osteophyte" => Ok(Target::Family(Family::Osp)),
            "scl" | "sclerosis" => Ok(Target::Family(Family::Scl)),
            "all" => Ok(Target::All),
            _ => Err(Error::UnknownName {
                kind: "feature family",
                value: s.to_string(),
            }),
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One image's features. Missing slots are NaN until imputed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredVector {
    pub id: String,
    pub split: Split,
    pub kl_grade: u8,
    pub values: Vec<f64>,
}

impl StructuredVector {
    pub fn family(&self, f: Family) -> &[f64] {
        &self.values[f.range()]
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_nan()).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OsteophyteFeatures {
    /// mf, lf, mt, lt
    pub grades: [u8; 4],
}

impl OsteophyteFeatures {
    pub fn total_burden(&self) -> u8 {
        self.grades.iter().sum()
    }

    pub fn max_grade(&self) -> u8 {
        *self.grades.iter().max().unwrap()
    }

    pub fn to_values(&self) -> [f64; OSTEOPHYTE_DIMS] {
        let [mf, lf, mt, lt] = self.grades.map(f64::from);
        [
            mf,
            lf,
            mt,
            lt,
            f64::from(self.total_burden()),
            f64::from(self.max_grade()),
            mf + lf,
            mt + lt,
            mf + mt,
            lf + lt,
        ]
    }
}

pub fn osteophyte_subvector(grades: [u8; 4]) -> Result<OsteophyteFeatures> {
    if let Some(&g) = grades.iter().find(|&&g| g > 3) {
        return Err(Error::LabelOutOfRange {
            label: g as usize,
            classes: 4,
        });
    }
    Ok(OsteophyteFeatures { grades })
}

/// Concatenates the family sub-vectors; absent slots become NaN.
pub fn concat(
    jsn: Option<&JsnFeatures>,
    osp: Option<&OsteophyteFeatures>,
    scl: Option<&SclerosisFeatures>,
) -> Vec<f64> {
    let mut v = Vec::with_capacity(FEATURE_COUNT);
    match jsn {
        Some(j) => v.extend(j.to_slots().iter().map(|s| s.unwrap_or(f64::NAN))),
        None => v.extend([f64::NAN; JSN_DIMS]),
    }
    match osp {
        Some(o) => v.extend(o.to_values()),
        None => v.extend([f64::NAN; OSTEOPHYTE_DIMS]),
    }
    match scl {
        Some(s) => v.extend(s.to_slots().iter().map(|s| s.unwrap_or(f64::NAN))),
        None => v.extend([f64::NAN; SCLEROSIS_DIMS]),
    }
    v
}

/// Per-dimension training medians used to fill missing slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Imputer {
    /// `None` where the dimension was never observed in training.
    pub medians: Vec<Option<f64>>,
}

impl Imputer {
    pub fn fit<'a>(train: impl IntoIterator<Item = &'a StructuredVector>) -> Imputer {
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); FEATURE_COUNT];
        for row in train {
            for (c, &v) in cols.iter_mut().zip(&row.values) {
                if v.is_finite() {
                    c.push(v);
                }
            }
        }
        Imputer {
            medians: cols
                .iter()
                .map(|c| (!c.is_empty()).then(|| stats::median(c)))
                .collect(),
        }
    }

    pub fn apply(&self, row: &mut StructuredVector) -> Result<()> {
        check_len(&row.values)?;
        for (j, v) in row.values.iter_mut().enumerate() {
            if !v.is_finite() {
                *v = self.medians[j].ok_or(Error::ImputerNotFitted(j))?;
            }
        }
        Ok(())
    }

    /// Like `apply`, but dimensions never observed in training fall back to 0.
    pub fn apply_lenient(&self, row: &mut StructuredVector) -> Result<()> {
        check_len(&row.values)?;
        for (j, v) in row.values.iter_mut().enumerate() {
            if !v.is_finite() {
                *v = self.medians[j].unwrap_or(0.0);
            }
        }
        Ok(())
    }
}

fn check_len(values: &[f64]) -> Result<()> {
    if values.len() != FEATURE_COUNT {
        return Err(Error::LengthMismatch {
            expected: FEATURE_COUNT,
            found: values.len(),
        });
    }
    Ok(())
}

/// Builds a complete row: concatenation followed by imputation.
pub fn assemble(
    id: &str,
    split: Split,
    kl_grade: u8,
    jsn: Option<&JsnFeatures>,
    osp: Option<&OsteophyteFeatures>,
    scl: Option<&SclerosisFeatures>,
    imputer: Option<&Imputer>,
) -> Result<StructuredVector> {
    let mut row = StructuredVector {
        id: id.to_string(),
        split,
        kl_grade,
        values: concat(jsn, osp, scl),
    };
    match imputer {
        Some(imp) => imp.apply(&mut row)?,
        None => {
            if let Some(j) = row.values.iter().position(|v| v.is_nan()) {
                return Err(Error::ImputerNotFitted(j));
            }
        }
    }
    Ok(row)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub fitted_on: String,
}

impl Normalizer {
    /// Fits population mean and std per column; std below 1e-8 becomes 1.
    pub fn fit(rows: &[Vec<f64>], fitted_on: &str) -> Result<Normalizer> {
        if rows.is_empty() {
            return Err(Error::InsufficientData("normalizer needs at least one row".into()));
        }
        let d = rows[0].len();
        let mut mean = vec![0.0; d];
        let mut std = vec![0.0; d];
        for j in 0..d {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row: i, column: j });
            }
            mean[j] = stats::mean(&col);
            let s = stats::std_pop(&col);
            std[j] = if s < STD_FLOOR { 1.0 } else { s };
        }
        Ok(Normalizer {
            mean,
            std,
            fitted_on: fitted_on.to_string(),
        })
    }

    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn inverse(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    pub fn apply_rows(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.apply(r)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Intervention {
    Zero,
    Permute,
}

impl Intervention {
    pub fn as_str(self) -> &'static str {
        match self {
            Intervention::Zero => "zero",
            Intervention::Permute => "permute",
        }
    }
}

impl FromStr for Intervention {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "zero" => Ok(Intervention::Zero),
            "permute" => Ok(Intervention::Permute),
            _ => Err(Error::UnknownName {
                kind: "intervention",
                value: s.to_string(),
            }),
        }
    }
}

/// The seeded row permutation used by `intervene` for `n` rows.
pub fn seeded_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// Row `i` of the target columns receives row `perm[i]`'s values.
pub fn permute_columns(z: &[Vec<f64>], columns: Range<usize>, perm: &[usize]) -> Vec<Vec<f64>> {
    assert_eq!(perm.len(), z.len(), "permutation length");
    let mut out = z.to_vec();
    for (i, &src) in perm.iter().enumerate() {
        out[i][columns.clone()].copy_from_slice(&z[src][columns.clone()]);
    }
    out
}

/// Applies an intervention to normalized rows.
pub fn intervene(z: &[Vec<f64>], target: Target, mode: Intervention, seed: u64) -> Result<Vec<Vec<f64>>> {
    let cols = target.columns();
    match mode {
        Intervention::Zero => Ok(z
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r[cols.clone()].iter_mut().for_each(|v| *v = 0.0);
                r
            })
            .collect()),
        Intervention::Permute => {
            if z.len() < 2 {
                return Err(Error::InsufficientData("permutation needs at least two rows".into()));
            }
            Ok(permute_columns(z, cols, &seeded_permutation(z.len(), seed)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn names_are_frozen() {
        assert_eq!(FEATURE_NAMES.len(), 50);
        assert_eq!(FEATURE_NAMES[0], "jsn_01");
        assert_eq!(FEATURE_NAMES[21], "jsn_22");
        assert_eq!(FEATURE_NAMES[22], "osp_01");
        assert_eq!(FEATURE_NAMES[32], "scl_01");
        assert_eq!(FEATURE_NAMES[49], "scl_18");
        for f in Family::ALL {
            for j in f.range() {
                assert!(FEATURE_NAMES[j].starts_with(f.as_str()));
            }
        }
    }

    #[test]
    fn osteophyte_examples() {
        assert_eq!(osteophyte_subvector([0; 4]).unwrap().to_values(), [0.0; 10]);
        assert_eq!(
            osteophyte_subvector([3; 4]).unwrap().to_values(),
            [3.0, 3.0, 3.0, 3.0, 12.0, 3.0, 6.0, 6.0, 6.0, 6.0]
        );
        assert_eq!(
            osteophyte_subvector([2, 0, 1, 0]).unwrap().to_values(),
            [2.0, 0.0, 1.0, 0.0, 3.0, 2.0, 2.0, 1.0, 3.0, 0.0]
        );
        assert!(osteophyte_subvector([0, 4, 0, 0]).is_err());
    }

    fn row(values: Vec<f64>) -> StructuredVector {
        StructuredVector {
            id: "r".into(),
            split: Split::Train,
            kl_grade: 0,
            values,
        }
    }

    #[test]
    fn missing_family_gets_training_medians() {
        let train: Vec<StructuredVector> = (0..5).map(|i| row(vec![i as f64; FEATURE_COUNT])).collect();
        let imp = Imputer::fit(&train);
        let osp = osteophyte_subvector([1, 2, 0, 0]).unwrap();
        let v = assemble("x", Split::Test, 2, None, Some(&osp), None, Some(&imp)).unwrap();
        assert_eq!(v.family(Family::Jsn), &[2.0; 22]);
        assert_eq!(v.family(Family::Osp), &osp.to_values());
        assert_eq!(v.family(Family::Scl), &[2.0; 18]);
        assert!(matches!(
            assemble("x", Split::Test, 2, None, Some(&osp), None, None),
            Err(Error::ImputerNotFitted(0))
        ));
    }

    #[test]
    fn unobserved_dimension_has_no_median() {
        let mut v = vec![1.0; FEATURE_COUNT];
        v[5] = f64::NAN;
        let imp = Imputer::fit(&[row(v.clone())]);
        assert!(matches!(imp.apply(&mut row(v.clone())), Err(Error::ImputerNotFitted(5))));
        let mut r = row(v);
        imp.apply_lenient(&mut r).unwrap();
        assert_eq!(r.values[5], 0.0);
    }

    #[test]
    fn normalizer_examples() {
        let v = vec![3.0; 4];
        let n = Normalizer::fit(&[v.clone(), v.clone()], "train").unwrap();
        assert_eq!(n.apply(&v), vec![0.0; 4]);
        let n = Normalizer::fit(&[vec![1.0, 5.0], vec![3.0, 9.0]], "train").unwrap();
        assert_eq!(n.apply(&[1.0, 5.0]), vec![-1.0, -1.0]);
        assert_eq!(n.apply(&[3.0, 9.0]), vec![1.0, 1.0]);
    }

    #[test]
    fn normalized_columns_are_standard() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|_| (0..50).map(|j| rng.gen::<f64>() * (j + 1) as f64 - 3.0).collect())
            .collect();
        let n = Normalizer::fit(&rows, "train").unwrap();
        let z = n.apply_rows(&rows);
        for j in 0..50 {
            let col: Vec<f64> = z.iter().map(|r| r[j]).collect();
            assert!(stats::mean(&col).abs() < 1e-9);
            assert!((stats::std_pop(&col) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn permute_three_rows_by_hand() {
        let z: Vec<Vec<f64>> = (0..3).map(|i| (0..50).map(|j| (100 * i + j) as f64).collect()).collect();
        let seed = 42;
        let mut perm = vec![0usize, 1, 2];
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let out = intervene(&z, Target::Family(Family::Jsn), Intervention::Permute, seed).unwrap();
        for i in 0..3 {
            assert_eq!(&out[i][0..22], &z[perm[i]][0..22]);
            assert_eq!(&out[i][22..], &z[i][22..]);
        }
        assert!(intervene(&z[..1], Target::All, Intervention::Permute, 1).is_err());
        assert!("bone".parse::<Target>().is_err());
    }

    #[test]
    fn zero_on_zero_columns_is_noop() {
        let mut z = vec![vec![1.5; 50]; 4];
        for r in z.iter_mut() {
            r[22..32].iter_mut().for_each(|v| *v = 0.0);
        }
        assert_eq!(intervene(&z, Target::Family(Family::Osp), Intervention::Zero, 0).unwrap(), z);
    }

    proptest! {
        #[test]
        fn zero_equals_mean_replacement(seed in 0u64..500, fam in 0usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let raw: Vec<Vec<f64>> = (0..12).map(|_| (0..50).map(|_| rng.gen_range(-5.0..5.0)).collect()).collect();
            let n = Normalizer::fit(&raw, "train").unwrap();
            let target = Target::ALL[fam];
            let zeroed = intervene(&n.apply_rows(&raw), target, Intervention::Zero, 0).unwrap();
            for (r, zr) in raw.iter().zip(&zeroed) {
                let mut replaced = r.clone();
                for j in target.columns() { replaced[j] = n.mean[j]; }
                for (a, b) in n.apply(&replaced).iter().zip(zr) {
                    prop_assert!((a - b).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn permute_preserves_family_blocks(seed in 0u64..500, rows in 2usize..20) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let z: Vec<Vec<f64>> = (0..rows).map(|_| (0..50).map(|_| rng.gen::<f64>()).collect()).collect();
            let out = intervene(&z, Target::Family(Family::Scl), Intervention::Permute, seed).unwrap();
            let mut a: Vec<Vec<u64>> = z.iter().map(|r| r[32..].iter().map(|v| v.to_bits()).collect()).collect();
            let mut b: Vec<Vec<u64>> = out.iter().map(|r| r[32..].iter().map(|v| v.to_bits()).collect()).collect();
            a.sort(); b.sort();
            prop_assert_eq!(a, b);
            for (x, y) in z.iter().zip(&out) { prop_assert_eq!(&x[..32], &y[..32]); }
        }

        #[test]
        fn identity_permutation_is_noop(seed in 0u64..200, rows in 1usize..10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let z: Vec<Vec<f64>> = (0..rows).map(|_| (0..50).map(|_| rng.gen::<f64>()).collect()).collect();
            let id: Vec<usize> = (0..rows).collect();
            prop_assert_eq!(permute_columns(&z, 0..50, &id), z);
        }

        #[test]
        fn normalizer_round_trip(seed in 0u64..300) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<f64>> = (0..8).map(|_| (0..50).map(|_| rng.gen_range(-100.0..100.0)).collect()).collect();
            let n = Normalizer::fit(&rows, "train").unwrap();
            for r in &rows {
                for (a, b) in n.inverse(&n.apply(r)).iter().zip(r) { prop_assert!((a - b).abs() < 1e-9); }
            }
        }

        #[test]
        fn imputation_is_idempotent(seed in 0u64..300) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<StructuredVector> = (0..10).map(|_| row((0..50).map(|_| if rng.gen_bool(0.2) { f64::NAN } else { rng.gen() }).collect())).collect();
            let imp = Imputer::fit(&rows);
            let mut once = rows[0].clone();
            imp.apply_lenient(&mut once).unwrap();
            let mut twice = once.clone();
            imp.apply_lenient(&mut twice).unwrap();
            prop_assert_eq!(once.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), twice.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
    }
}
