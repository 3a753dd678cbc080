//! Binary sclerosis head: L2-regularized logistic regression fitted by
//! Newton's method, with a decision threshold swept on validation data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::metrics::macro_f1;
use crate::features::Normalizer;

pub const MAX_ITERS: usize = 500;
pub const TOL: f64 = 1e-8;
pub const L2: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SclerosisHead {
    pub normalizer: Normalizer,
    /// One weight per input followed by the bias.
    pub weights: Vec<f64>,
    pub threshold: f64,
    pub val_macro_f1: f64,
    pub iterations: usize,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[piv][col].abs() < 1e-300 {
            return Err(Error::InsufficientData("singular system".into()));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Ok(x)
}

fn with_bias(z: &[f64]) -> Vec<f64> {
    let mut v = z.to_vec();
    v.push(1.0);
    v
}

/// Newton iterations on the penalized log-likelihood (bias unpenalized).
fn fit_logistic(z: &[Vec<f64>], y: &[u8]) -> Result<(Vec<f64>, usize)> {
    let d = z[0].len() + 1;
    let rows: Vec<Vec<f64>> = z.iter().map(|r| with_bias(r)).collect();
    let mut w = vec![0.0; d];
    for it in 1..=MAX_ITERS {
        let mut grad = vec![0.0; d];
        let mut hess = vec![vec![0.0; d]; d];
        for (x, &t) in rows.iter().zip(y) {
            let p = sigmoid(x.iter().zip(&w).map(|(a, b)| a * b).sum());
            let s = p * (1.0 - p);
            for i in 0..d {
                grad[i] += (p - f64::from(t)) * x[i];
                for j in 0..=i {
                    hess[i][j] += s * x[i] * x[j];
                }
            }
        }
        for i in 0..d {
            for j in 0..i {
                hess[j][i] = hess[i][j];
            }
            if i + 1 < d {
                grad[i] += L2 * w[i];
                hess[i][i] += L2;
            } else {
                hess[i][i] += 1e-12;
            }
        }
        let step = solve(hess, grad)?;
        let mut largest: f64 = 0.0;
        for (wi, s) in w.iter_mut().zip(&step) {
            *wi -= s;
            largest = largest.max(s.abs());
        }
        if largest < TOL {
            return Ok((w, it));
        }
    }
    Ok((w, MAX_ITERS))
}

/// Smallest candidate threshold maximizing macro F1 of `p >= tau`; candidates
/// are midpoints between sorted unique probabilities, else 0.5.
pub fn sweep_threshold(probs: &[f64], y: &[u8]) -> Result<(f64, f64)> {
    let mut uniq = probs.to_vec();
    uniq.sort_by(f64::total_cmp);
    uniq.dedup();
    let predict = |tau: f64| -> Vec<u8> { probs.iter().map(|&p| u8::from(p >= tau)).collect() };
    let mut best: Option<(f64, f64)> = None;
    for w in uniq.windows(2) {
        let tau = 0.5 * (w[0] + w[1]);
        let f1 = macro_f1(y, &predict(tau))?;
        if best.is_none_or(|(_, b)| f1 > b) {
            best = Some((tau, f1));
        }
    }
    match best {
        Some(b) => Ok(b),
        None => Ok((0.5, macro_f1(y, &predict(0.5))?)),
    }
}

impl SclerosisHead {
    /// Fits on the training rows and picks the threshold on validation rows.
    pub fn fit(train_x: &[Vec<f64>], train_y: &[u8], val_x: &[Vec<f64>], val_y: &[u8]) -> Result<SclerosisHead> {
        if train_x.is_empty() || val_x.is_empty() {
            return Err(Error::InsufficientData("sclerosis head needs train and validation rows".into()));
        }
        if let Some(&b) = train_y.iter().chain(val_y).find(|&&b| b > 1) {
            return Err(Error::LabelOutOfRange { label: b as usize, classes: 2 });
        }
        if train_y.iter().all(|&b| b == train_y[0]) {
            return Err(Error::InsufficientData("sclerosis training labels contain one class".into()));
        }
        let normalizer = Normalizer::fit(train_x, "train")?;
        let (weights, iterations) = fit_logistic(&normalizer.apply_rows(train_x), train_y)?;
        let mut head = SclerosisHead {
            normalizer,
            weights,
            threshold: 0.5,
            val_macro_f1: 0.0,
            iterations,
        };
        let probs = head.predict_proba_rows(val_x);
        let (tau, f1) = sweep_threshold(&probs, val_y)?;
        head.threshold = tau;
        head.val_macro_f1 = f1;
        Ok(head)
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let z = with_bias(&self.normalizer.apply(x));
        sigmoid(z.iter().zip(&self.weights).map(|(a, b)| a * b).sum())
    }

    pub fn predict_proba_rows(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.iter().map(|r| self.predict_proba(r)).collect()
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> Vec<u8> {
        rows.iter().map(|r| u8::from(self.predict_proba(r) >= self.threshold)).collect()
    }
}
