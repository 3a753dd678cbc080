//! Stratified k-fold cross-validation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::metrics::qwk;
use crate::model::gbt::{GbtEnsemble, GbtParams};

/// Fold index per sample. Each class is shuffled and dealt round-robin,
/// continuing from where the previous class stopped, so per-class counts
/// across folds differ by at most one and fold sizes stay balanced.
pub fn stratified_kfold(y: &[u8], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("k-fold needs k >= 2, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut classes: Vec<u8> = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut fold = vec![0usize; y.len()];
    let mut offset = 0;
    for c in classes {
        let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
        if members.len() < k {
            log::warn!("class {c} has {} samples, fewer than {k} folds", members.len());
        }
        members.shuffle(&mut rng);
        for (j, &i) in members.iter().enumerate() {
            fold[i] = (offset + j) % k;
        }
        offset = (offset + members.len()) % k;
    }
    Ok(fold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: usize,
    pub fold_qwk: Vec<f64>,
    pub mean_qwk: f64,
    pub std_qwk: f64,
    /// Out-of-fold prediction per sample.
    pub oof_pred: Vec<u8>,
}

/// Trains one model per fold (folds run concurrently) and scores QWK on the
/// held-out fold.
pub fn cross_validate(
    raw: &[Vec<f64>],
    y: &[u8],
    feature_names: &[&str],
    params: &GbtParams,
    k: usize,
    seed: u64,
) -> Result<CvReport> {
    let fold = stratified_kfold(y, k, seed)?;
    let results: Vec<Result<(f64, Vec<(usize, u8)>)>> = (0..k)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..y.len()).filter(|&i| fold[i] != f).collect();
            let test: Vec<usize> = (0..y.len()).filter(|&i| fold[i] == f).collect();
            if test.is_empty() || train.is_empty() {
                return Err(Error::InsufficientData(format!("fold {f} is empty")));
            }
            let xt: Vec<Vec<f64>> = train.iter().map(|&i| raw[i].clone()).collect();
            let yt: Vec<u8> = train.iter().map(|&i| y[i]).collect();
            let (m, _) = GbtEnsemble::fit(&xt, &yt, feature_names, params, None)?;
            let xv: Vec<Vec<f64>> = test.iter().map(|&i| raw[i].clone()).collect();
            let yv: Vec<u8> = test.iter().map(|&i| y[i]).collect();
            let pred = m.predict(&xv)?;
            let score = qwk(&yv, &pred, params.class_count)?;
            Ok((score, test.into_iter().zip(pred).collect()))
        })
        .collect();
    let mut fold_qwk = Vec::with_capacity(k);
    let mut oof_pred = vec![0u8; y.len()];
    for r in results {
        let (s, preds) = r?;
        fold_qwk.push(s);
        for (i, p) in preds {
            oof_pred[i] = p;
        }
    }
    Ok(CvReport {
        folds: k,
        mean_qwk: crate::stats::mean(&fold_qwk),
        std_qwk: crate::stats::std_pop(&fold_qwk),
        fold_qwk,
        oof_pred,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn per_fold_counts(y: &[u8], fold: &[usize], k: usize, c: u8) -> Vec<usize> {
        let mut n = vec![0; k];
        for (i, &f) in fold.iter().enumerate() {
            if y[i] == c {
                n[f] += 1;
            }
        }
        n
    }

    #[test]
    fn five_singletons() {
        let f = stratified_kfold(&[0; 5], 5, 1).unwrap();
        let mut s = f.clone();
        s.sort();
        assert_eq!(s, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn divisible_classes_split_evenly() {
        let y: Vec<u8> = (0..100).map(|i| (i % 5) as u8).collect();
        let f = stratified_kfold(&y, 5, 3).unwrap();
        for c in 0..5 {
            assert_eq!(per_fold_counts(&y, &f, 5, c), vec![4; 5]);
        }
    }

    #[test]
    fn rejects_k_below_two() {
        assert!(stratified_kfold(&[0, 1], 1, 0).is_err());
    }

    #[test]
    fn same_seed_same_folds() {
        let y: Vec<u8> = (0..37).map(|i| (i % 4) as u8).collect();
        assert_eq!(stratified_kfold(&y, 5, 8).unwrap(), stratified_kfold(&y, 5, 8).unwrap());
    }

    proptest! {
        #[test]
        fn per_class_counts_differ_by_at_most_one(a in 0usize..15, b in 0usize..15, c in 0usize..15, k in 2usize..7, seed in 0u64..100) {
            let mut y = vec![0u8; a];
            y.extend(vec![1u8; b]);
            y.extend(vec![2u8; c]);
            let f = stratified_kfold(&y, k, seed).unwrap();
            for cl in 0..3 {
                let n = per_fold_counts(&y, &f, k, cl);
                prop_assert!(n.iter().max().unwrap() - n.iter().min().unwrap() <= 1);
            }
            let mut sizes = vec![0; k];
            for &x in &f { sizes[x] += 1; }
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }
}
