//! Segmentation, agreement and classification metrics.

use serde::{Deserialize, Serialize};

use crate::dataio::LabelMask;
use crate::error::{Error, Result};
use crate::stats;

fn same_shape(a: &LabelMask, b: &LabelMask) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch {
            a_width: a.width(),
            a_height: a.height(),
            b_width: b.width(),
            b_height: b.height(),
        });
    }
    Ok(())
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch { expected: a, found: b });
    }
    Ok(())
}

/// Dice overlap of the pixels carrying `label`; 1 when both are empty.
pub fn dice(a: &LabelMask, b: &LabelMask, label: u8) -> Result<f64> {
    same_shape(a, b)?;
    let (mut inter, mut na, mut nb) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.labels().iter().zip(b.labels()) {
        let (ia, ib) = (x == label, y == label);
        na += ia as usize;
        nb += ib as usize;
        inter += (ia && ib) as usize;
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (na + nb) as f64)
}

/// Region pixels with an 8-neighbour outside the region or the image.
pub fn boundary(mask: &LabelMask, label: u8) -> Vec<(usize, usize)> {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let inside = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && mask.get(x as usize, y as usize) == label;
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !inside(x, y) {
                continue;
            }
            let edge = (-1..=1).any(|dy| (-1..=1).any(|dx| (dx != 0 || dy != 0) && !inside(x + dx, y + dy)));
            if edge {
                out.push((x as usize, y as usize));
            }
        }
    }
    out
}

fn directed(from: &[(usize, usize)], to: &[(usize, usize)], out: &mut Vec<f64>) {
    for &(x, y) in from {
        let best = to
            .iter()
            .map(|&(u, v)| {
                let (dx, dy) = (x as f64 - u as f64, y as f64 - v as f64);
                dx * dx + dy * dy
            })
            .fold(f64::INFINITY, f64::min);
        out.push(best.sqrt());
    }
}

/// 95th percentile of the pooled directed boundary distances.
pub fn hd95(a: &LabelMask, b: &LabelMask, label: u8) -> Result<f64> {
    same_shape(a, b)?;
    let (ba, bb) = (boundary(a, label), boundary(b, label));
    if ba.is_empty() || bb.is_empty() {
        return Err(Error::InsufficientData(format!("label {label} absent from a mask")));
    }
    let mut d = Vec::with_capacity(ba.len() + bb.len());
    directed(&ba, &bb, &mut d);
    directed(&bb, &ba, &mut d);
    Ok(stats::quantile(&d, 0.95))
}

/// ICC(2,1): two-way random effects, absolute agreement, single rater.
pub fn icc(pairs: &[(f64, f64)]) -> Result<f64> {
    let n = pairs.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!("ICC needs at least 3 pairs, got {n}")));
    }
    let k = 2.0;
    let nf = n as f64;
    let grand = pairs.iter().map(|(a, b)| a + b).sum::<f64>() / (k * nf);
    let col = [
        pairs.iter().map(|p| p.0).sum::<f64>() / nf,
        pairs.iter().map(|p| p.1).sum::<f64>() / nf,
    ];
    let ssr = k * pairs.iter().map(|(a, b)| ((a + b) / k - grand).powi(2)).sum::<f64>();
    let ssc = nf * col.iter().map(|c| (c - grand).powi(2)).sum::<f64>();
    let sst: f64 = pairs.iter().map(|(a, b)| (a - grand).powi(2) + (b - grand).powi(2)).sum();
    let sse = sst - ssr - ssc;
    let msr = ssr / (nf - 1.0);
    let msc = ssc / (k - 1.0);
    let mse = sse / ((nf - 1.0) * (k - 1.0));
    let denom = msr + (k - 1.0) * mse + k * (msc - mse) / nf;
    if sst == 0.0 || denom.abs() < 1e-300 {
        let identical = pairs.iter().all(|(a, b)| a == b);
        return Ok(if identical { 1.0 } else { 0.0 });
    }
    Ok((msr - mse) / denom)
}

fn check_labels(y: &[u8], classes: usize) -> Result<()> {
    if let Some(&c) = y.iter().find(|&&c| c as usize >= classes) {
        return Err(Error::LabelOutOfRange {
            label: c as usize,
            classes,
        });
    }
    Ok(())
}

/// Confusion counts, `m[true][pred]`.
pub fn confusion(y: &[u8], yhat: &[u8], classes: usize) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; classes]; classes];
    for (&a, &b) in y.iter().zip(yhat) {
        m[a as usize][b as usize] += 1.0;
    }
    m
}

/// Quadratic weighted kappa.
pub fn qwk(y: &[u8], yhat: &[u8], classes: usize) -> Result<f64> {
    check_lengths(y.len(), yhat.len())?;
    check_labels(y, classes)?;
    check_labels(yhat, classes)?;
    if y.is_empty() {
        return Err(Error::InsufficientData("empty label vector".into()));
    }
    let o = confusion(y, yhat, classes);
    let n = y.len() as f64;
    let rows: Vec<f64> = o.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..classes).map(|j| o.iter().map(|r| r[j]).sum()).collect();
    let scale = ((classes - 1) as f64).powi(2);
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..classes {
        for j in 0..classes {
            let w = (i as f64 - j as f64).powi(2) / scale;
            num += w * o[i][j];
            den += w * rows[i] * cols[j] / n;
        }
    }
    if den == 0.0 {
        let diagonal = y.iter().zip(yhat).all(|(a, b)| a == b);
        return Ok(if diagonal { 1.0 } else { 0.0 });
    }
    Ok(1.0 - num / den)
}

pub fn accuracy(y: &[u8], yhat: &[u8]) -> Result<f64> {
    check_lengths(y.len(), yhat.len())?;
    if y.is_empty() {
        return Err(Error::InsufficientData("empty label vector".into()));
    }
    Ok(y.iter().zip(yhat).filter(|(a, b)| a == b).count() as f64 / y.len() as f64)
}

fn label_set(v: impl IntoIterator<Item = u8>) -> Vec<u8> {
    let mut s: Vec<u8> = v.into_iter().collect();
    s.sort_unstable();
    s.dedup();
    s
}

/// F1 of one class; 0 when it has no true positives.
pub fn class_f1(y: &[u8], yhat: &[u8], c: u8) -> f64 {
    let (mut tp, mut fp, mut fnn) = (0.0, 0.0, 0.0);
    for (&a, &b) in y.iter().zip(yhat) {
        match (a == c, b == c) {
            (true, true) => tp += 1.0,
            (false, true) => fp += 1.0,
            (true, false) => fnn += 1.0,
            _ => {}
        }
    }
    if tp == 0.0 {
        0.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fnn)
    }
}

/// Unweighted mean F1 over every label that occurs in `y` or `yhat`.
pub fn macro_f1(y: &[u8], yhat: &[u8]) -> Result<f64> {
    check_lengths(y.len(), yhat.len())?;
    let labels = label_set(y.iter().chain(yhat).copied());
    if labels.is_empty() {
        return Err(Error::InsufficientData("empty label vector".into()));
    }
    Ok(labels.iter().map(|&c| class_f1(y, yhat, c)).sum::<f64>() / labels.len() as f64)
}

/// Mean recall over the classes present in `y`.
pub fn balanced_accuracy(y: &[u8], yhat: &[u8]) -> Result<f64> {
    check_lengths(y.len(), yhat.len())?;
    let labels = label_set(y.iter().copied());
    if labels.is_empty() {
        return Err(Error::InsufficientData("empty label vector".into()));
    }
    let recall = |c: u8| {
        let total = y.iter().filter(|&&a| a == c).count() as f64;
        let hit = y.iter().zip(yhat).filter(|(&a, &b)| a == c && b == c).count() as f64;
        hit / total
    };
    Ok(labels.iter().map(|&c| recall(c)).sum::<f64>() / labels.len() as f64)
}

/// Rank-based AUC with midranks for ties; `None` without both classes.
pub fn binary_auc(positive: &[bool], scores: &[f64]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = mid;
        }
        i = j + 1;
    }
    let rank_sum: f64 = ranks.iter().zip(positive).filter(|(_, &p)| p).map(|(r, _)| r).sum();
    let np = n_pos as f64;
    Some((rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// One-vs-rest AUC averaged over the classes present in `y`.
pub fn macro_auc(y: &[u8], probs: &[Vec<f64>]) -> Result<Option<f64>> {
    check_lengths(y.len(), probs.len())?;
    let labels = label_set(y.iter().copied());
    if labels.len() < 2 {
        return Ok(None);
    }
    let mut total = 0.0;
    for &c in &labels {
        let pos: Vec<bool> = y.iter().map(|&a| a == c).collect();
        let s: Vec<f64> = probs.iter().map(|p| p[c as usize]).collect();
        match binary_auc(&pos, &s) {
            Some(a) => total += a,
            None => return Ok(None),
        }
    }
    Ok(Some(total / labels.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub balanced_accuracy: f64,
    pub macro_auc: Option<f64>,
}

pub fn classification_metrics(y: &[u8], yhat: &[u8], probs: Option<&[Vec<f64>]>) -> Result<ClassificationMetrics> {
    Ok(ClassificationMetrics {
        accuracy: accuracy(y, yhat)?,
        macro_f1: macro_f1(y, yhat)?,
        balanced_accuracy: balanced_accuracy(y, yhat)?,
        macro_auc: match probs {
            Some(p) => macro_auc(y, p)?,
            None => None,
        },
    })
}
