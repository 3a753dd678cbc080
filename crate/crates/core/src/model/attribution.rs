//! Model-agnostic attribution: permutation importance and occlusion deltas.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::metrics::qwk;
use crate::features::{permute_columns, Family, FEATURE_COUNT};
use crate::model::gbt::{argmax, GbtEnsemble};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Importance {
    pub name: String,
    /// Baseline QWK minus the mean QWK over permuted repeats.
    pub mean_drop: f64,
    pub drops: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationImportance {
    pub baseline_qwk: f64,
    pub repeats: usize,
    pub seed: u64,
    pub features: Vec<Importance>,
    /// Present only for full-width models.
    pub families: Vec<Importance>,
}

fn permuted_drop(model: &GbtEnsemble, x: &[Vec<f64>], y: &[u8], cols: std::ops::Range<usize>, seed: u64, baseline: f64) -> Result<f64> {
    let mut perm: Vec<usize> = (0..x.len()).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let xp = permute_columns(x, cols, &perm);
    Ok(baseline - qwk(y, &model.predict(&xp)?, model.params.class_count)?)
}

/// Task seed for (group, repeat); fixed offsets keep results independent of
/// scheduling.
fn task_seed(seed: u64, group: usize, repeat: usize) -> u64 {
    seed.wrapping_add((group as u64) << 20).wrapping_add(repeat as u64)
}

fn importance_of(
    model: &GbtEnsemble,
    x: &[Vec<f64>],
    y: &[u8],
    name: String,
    cols: std::ops::Range<usize>,
    group: usize,
    repeats: usize,
    seed: u64,
    baseline: f64,
) -> Result<Importance> {
    let drops = (0..repeats)
        .map(|r| permuted_drop(model, x, y, cols.clone(), task_seed(seed, group, r), baseline))
        .collect::<Result<Vec<f64>>>()?;
    Ok(Importance {
        name,
        mean_drop: drops.iter().sum::<f64>() / repeats as f64,
        drops,
    })
}

/// Metric drop when each feature (and each family) is row-permuted.
pub fn permutation_importance(
    model: &GbtEnsemble,
    x: &[Vec<f64>],
    y: &[u8],
    repeats: usize,
    seed: u64,
) -> Result<PermutationImportance> {
    if x.len() < 2 {
        return Err(Error::InsufficientData("permutation importance needs at least 2 rows".into()));
    }
    if repeats == 0 {
        return Err(Error::InvalidConfig("repeats must be at least 1".into()));
    }
    let baseline = qwk(y, &model.predict(x)?, model.params.class_count)?;
    let features = (0..model.dims())
        .into_par_iter()
        .map(|j| importance_of(model, x, y, model.feature_names[j].clone(), j..j + 1, j, repeats, seed, baseline))
        .collect::<Result<Vec<_>>>()?;
    let families = if model.dims() == FEATURE_COUNT {
        Family::ALL
            .par_iter()
            .enumerate()
            .map(|(i, f)| importance_of(model, x, y, f.as_str().to_string(), f.range(), model.dims() + i, repeats, seed, baseline))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    Ok(PermutationImportance {
        baseline_qwk: baseline,
        repeats,
        seed,
        features,
        families,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcclusionDelta {
    pub name: String,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Occlusion {
    pub predicted_class: usize,
    pub probability: f64,
    pub deltas: Vec<OcclusionDelta>,
}

/// For each feature: predicted-class probability minus the probability with
/// that feature moved to its training mean.
pub fn occlusion_attribution(model: &GbtEnsemble, x: &[f64]) -> Result<Occlusion> {
    let z = model.normalizer.apply(x);
    let p = model.predict_proba_normalized(&z)?;
    let c = argmax(&p);
    let mut deltas = Vec::with_capacity(z.len());
    for j in 0..z.len() {
        let mut zj = z.clone();
        zj[j] = 0.0;
        let q = model.predict_proba_normalized(&zj)?;
        deltas.push(OcclusionDelta {
            name: model.feature_names[j].clone(),
            delta: p[c] - q[c],
        });
    }
    Ok(Occlusion {
        predicted_class: c,
        probability: p[c],
        deltas,
    })
}
