//! Percentile bootstrap over sample indices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    pub resamples: usize,
    /// Resamples on which the metric was undefined.
    pub skipped: usize,
    #[serde(skip)]
    pub distribution: Vec<f64>,
}

/// Resample `b` draws `n` indices with replacement from stream `b` of the
/// seeded generator, so results do not depend on scheduling.
pub fn resample_indices(n: usize, seed: u64, b: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(b as u64);
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

/// Metric values on `b` resamples (sorted) and the number skipped.
pub fn bootstrap_distribution<F>(n: usize, b: usize, seed: u64, metric: F) -> (Vec<f64>, usize)
where
    F: Fn(&[usize]) -> Option<f64> + Sync,
{
    let values: Vec<Option<f64>> = (0..b)
        .into_par_iter()
        .map(|i| metric(&resample_indices(n, seed, i)).filter(|v| v.is_finite()))
        .collect();
    let skipped = values.iter().filter(|v| v.is_none()).count();
    let mut dist: Vec<f64> = values.into_iter().flatten().collect();
    dist.sort_by(f64::total_cmp);
    (dist, skipped)
}

/// Equal-tailed percentile interval of a sorted distribution.
pub fn percentile_interval(sorted: &[f64], level: f64) -> (f64, f64) {
    let tail = (1.0 - level) / 2.0;
    (stats::quantile_sorted(sorted, tail), stats::quantile_sorted(sorted, 1.0 - tail))
}

pub fn bootstrap_ci<F>(n: usize, b: usize, level: f64, seed: u64, metric: F) -> Result<BootstrapResult>
where
    F: Fn(&[usize]) -> Option<f64> + Sync,
{
    if n < 2 {
        return Err(Error::InsufficientData(format!("bootstrap needs at least 2 samples, got {n}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!("confidence level {level} outside (0, 1)")));
    }
    let (dist, skipped) = bootstrap_distribution(n, b, seed, metric);
    if dist.is_empty() {
        return Err(Error::InsufficientData("metric undefined on every resample".into()));
    }
    let (lo, hi) = percentile_interval(&dist, level);
    Ok(BootstrapResult {
        lo,
        hi,
        level,
        resamples: b,
        skipped,
        distribution: dist,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::metrics::{accuracy, macro_auc};
    use proptest::prelude::*;

    fn acc_metric<'a>(y: &'a [u8], p: &'a [u8]) -> impl Fn(&[usize]) -> Option<f64> + Sync + 'a {
        move |idx: &[usize]| {
            let a: Vec<u8> = idx.iter().map(|&i| y[i]).collect();
            let b: Vec<u8> = idx.iter().map(|&i| p[i]).collect();
            accuracy(&a, &b).ok()
        }
    }

    #[test]
    fn constant_metric_gives_point_interval() {
        let y = vec![1u8; 40];
        let r = bootstrap_ci(40, 200, 0.95, 1, acc_metric(&y, &y)).unwrap();
        assert_eq!((r.lo, r.hi), (1.0, 1.0));
    }

    #[test]
    fn same_seed_same_interval() {
        let y: Vec<u8> = (0..60).map(|i| (i % 3) as u8).collect();
        let p: Vec<u8> = (0..60).map(|i| ((i * 7) % 3) as u8).collect();
        let a = bootstrap_ci(60, 300, 0.95, 9, acc_metric(&y, &p)).unwrap();
        let b = bootstrap_ci(60, 300, 0.95, 9, acc_metric(&y, &p)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.distribution, b.distribution);
    }

    #[test]
    fn undefined_resamples_are_counted() {
        // AUC needs both classes; with one positive many resamples lose it
        let y: Vec<u8> = (0..10).map(|i| u8::from(i == 0)).collect();
        let probs: Vec<Vec<f64>> = (0..10).map(|i| vec![1.0 - i as f64 / 10.0, i as f64 / 10.0]).collect();
        let r = bootstrap_ci(10, 200, 0.95, 3, |idx| {
            let yy: Vec<u8> = idx.iter().map(|&i| y[i]).collect();
            let pp: Vec<Vec<f64>> = idx.iter().map(|&i| probs[i].clone()).collect();
            macro_auc(&yy, &pp).ok().flatten()
        })
        .unwrap();
        assert!(r.skipped > 0);
        assert_eq!(r.distribution.len() + r.skipped, 200);
        assert!(bootstrap_ci(10, 50, 0.95, 3, |_| None).is_err());
        assert!(bootstrap_ci(1, 50, 0.95, 3, |_| Some(1.0)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn wider_level_gives_wider_interval(seed in 0u64..1000, l1 in 0.5f64..0.9, dl in 0.01f64..0.09) {
            let y: Vec<u8> = (0..50).map(|i| (i % 2) as u8).collect();
            let p: Vec<u8> = (0..50).map(|i| ((i / 3) % 2) as u8).collect();
            let (dist, _) = bootstrap_distribution(50, 200, seed, acc_metric(&y, &p));
            let (a_lo, a_hi) = percentile_interval(&dist, l1);
            let (b_lo, b_hi) = percentile_interval(&dist, l1 + dl);
            prop_assert!(b_lo <= a_lo && b_hi >= a_hi);
        }
    }
}
