//! Feature-family ablation (retraining) and inference-time interventions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::metrics::{accuracy, macro_auc, qwk};
use crate::features::{intervene, Family, Intervention, StructuredVector, Target, FEATURE_COUNT, FEATURE_NAMES};
use crate::model::gbt::{argmax, GbtEnsemble, GbtParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FamilyConfig {
    pub name: &'static str,
    pub families: &'static [Family],
}

impl FamilyConfig {
    pub fn columns(&self) -> Vec<usize> {
        let mut cols: Vec<usize> = self.families.iter().flat_map(|f| f.range()).collect();
        cols.sort_unstable();
        cols
    }

    pub fn dims(&self) -> usize {
        self.families.iter().map(|f| f.range().len()).sum()
    }
}

/// The six family configurations, in reporting order.
pub const FAMILY_CONFIGS: [FamilyConfig; 6] = [
    FamilyConfig {
        name: "JSN only",
        families: &[Family::Jsn],
    },
    FamilyConfig {
        name: "Osteophyte only",
        families: &[Family::Osp],
    },
    FamilyConfig {
        name: "Sclerosis only",
        families: &[Family::Scl],
    },
    FamilyConfig {
        name: "Osteophyte + Sclerosis",
        families: &[Family::Osp, Family::Scl],
    },
    FamilyConfig {
        name: "JSN + Osteophyte",
        families: &[Family::Jsn, Family::Osp],
    },
    FamilyConfig {
        name: "JSN + Osteophyte + Sclerosis (full)",
        families: &[Family::Jsn, Family::Osp, Family::Scl],
    },
];

pub fn family_config(name: &str) -> Result<FamilyConfig> {
    FAMILY_CONFIGS
        .iter()
        .find(|c| c.name.eq_ignore_ascii_case(name))
        .copied()
        .ok_or_else(|| Error::UnknownName {
            kind: "ablation config",
            value: name.to_string(),
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyAblationRow {
    pub config: String,
    pub dims: usize,
    pub qwk: f64,
    pub accuracy: f64,
}

fn select(rows: &[StructuredVector], cols: &[usize]) -> (Vec<Vec<f64>>, Vec<u8>) {
    (
        rows.iter().map(|r| cols.iter().map(|&j| r.values[j]).collect()).collect(),
        rows.iter().map(|r| r.kl_grade).collect(),
    )
}

/// Retrains on each configuration's columns and scores the test rows.
pub fn ablation_family(
    train: &[StructuredVector],
    test: &[StructuredVector],
    params: &GbtParams,
    configs: &[FamilyConfig],
) -> Result<Vec<FamilyAblationRow>> {
    configs
        .par_iter()
        .map(|cfg| {
            let cols = cfg.columns();
            let names: Vec<&str> = cols.iter().map(|&j| FEATURE_NAMES[j]).collect();
            let (xt, yt) = select(train, &cols);
            let (xv, yv) = select(test, &cols);
            let (m, _) = GbtEnsemble::fit(&xt, &yt, &names, params, None)?;
            let pred = m.predict(&xv)?;
            Ok(FamilyAblationRow {
                config: cfg.name.to_string(),
                dims: cfg.dims(),
                qwk: qwk(&yv, &pred, params.class_count)?,
                accuracy: accuracy(&yv, &pred)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionRow {
    pub intervention: String,
    pub family: String,
    pub dims: usize,
    pub qwk: f64,
    pub delta_qwk: f64,
    pub auc: Option<f64>,
}

/// Baseline row plus zero and permute rows per target, without retraining.
/// Permutation seeds are `seed + target index`.
pub fn ablation_intervention(
    model: &GbtEnsemble,
    test_raw: &[Vec<f64>],
    y: &[u8],
    targets: &[Target],
    seed: u64,
) -> Result<Vec<InterventionRow>> {
    if model.dims() != FEATURE_COUNT {
        return Err(Error::LengthMismatch {
            expected: FEATURE_COUNT,
            found: model.dims(),
        });
    }
    let k = model.params.class_count;
    let z = model.normalizer.apply_rows(test_raw);
    let score = |rows: &[Vec<f64>]| -> Result<(f64, Option<f64>)> {
        let probs = model.predict_proba_rows_normalized(rows)?;
        let pred: Vec<u8> = probs.iter().map(|p| argmax(p) as u8).collect();
        Ok((qwk(y, &pred, k)?, macro_auc(y, &probs)?))
    };
    let (base_qwk, base_auc) = score(&z)?;
    let mut rows = vec![InterventionRow {
        intervention: "none".into(),
        family: "-".into(),
        dims: FEATURE_COUNT,
        qwk: base_qwk,
        delta_qwk: 0.0,
        auc: base_auc,
    }];
    let jobs: Vec<(Intervention, usize, Target)> = [Intervention::Zero, Intervention::Permute]
        .into_iter()
        .flat_map(|m| targets.iter().enumerate().map(move |(i, &t)| (m, i, t)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(mode, i, target)| {
            let zi = intervene(&z, target, mode, seed.wrapping_add(i as u64))?;
            let (q, auc) = score(&zi)?;
            Ok(InterventionRow {
                intervention: mode.as_str().into(),
                family: target.as_str().into(),
                dims: target.columns().len(),
                qwk: q,
                delta_qwk: q - base_qwk,
                auc,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.extend(results);
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Split;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn config_dims_match_table_layout() {
        let dims: Vec<usize> = FAMILY_CONFIGS.iter().map(FamilyConfig::dims).collect();
        assert_eq!(dims, vec![22, 10, 18, 28, 32, 50]);
        assert_eq!(family_config("JSN + Osteophyte").unwrap().dims(), 32);
        assert!(family_config("bones").is_err());
    }

    fn planted(n: usize, seed: u64) -> Vec<StructuredVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let values: Vec<f64> = (0..FEATURE_COUNT).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let kl = ((values[0] + 1.0) * 2.5).floor().min(4.0) as u8;
                StructuredVector {
                    id: format!("s{i}"),
                    split: Split::Train,
                    kl_grade: kl,
                    values,
                }
            })
            .collect()
    }

    fn small_params() -> GbtParams {
        GbtParams {
            n_rounds: 30,
            max_depth: 3,
            ..Default::default()
        }
    }

    #[test]
    fn jsn_signal_beats_sclerosis() {
        let train = planted(300, 1);
        let test = planted(100, 2);
        let cfgs = [FAMILY_CONFIGS[0], FAMILY_CONFIGS[2]];
        let rows = ablation_family(&train, &test, &small_params(), &cfgs).unwrap();
        assert!(rows[0].qwk > rows[1].qwk);
        assert_eq!(rows[0].config, "JSN only");
    }

    #[test]
    fn interventions_follow_the_signal() {
        let train = planted(300, 3);
        let test = planted(120, 4);
        let x: Vec<Vec<f64>> = train.iter().map(|r| r.values.clone()).collect();
        let y: Vec<u8> = train.iter().map(|r| r.kl_grade).collect();
        let (m, _) = GbtEnsemble::fit(&x, &y, &FEATURE_NAMES, &small_params(), None).unwrap();
        let tx: Vec<Vec<f64>> = test.iter().map(|r| r.values.clone()).collect();
        let ty: Vec<u8> = test.iter().map(|r| r.kl_grade).collect();
        assert_eq!(ablation_intervention(&m, &tx, &ty, &[], 1).unwrap().len(), 1);
        let rows = ablation_intervention(&m, &tx, &ty, &Target::ALL, 1).unwrap();
        assert_eq!(rows.len(), 9);
        let delta = |mode: &str, fam: &str| rows.iter().find(|r| r.intervention == mode && r.family == fam).unwrap().delta_qwk;
        for mode in ["zero", "permute"] {
            assert!(delta(mode, "jsn").abs() > delta(mode, "osp").abs());
            assert!(delta(mode, "jsn").abs() > delta(mode, "scl").abs());
        }
        // a family the model never splits on leaves zeroing without effect
        let used = m.used_features();
        for fam in Family::ALL {
            if !used.iter().any(|j| fam.range().contains(j)) {
                assert_eq!(delta("zero", fam.as_str()), 0.0);
            }
        }
    }
}
