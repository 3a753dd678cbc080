//! Metric reports with bootstrap intervals, and their Markdown rendering.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::ablation::{FamilyAblationRow, InterventionRow};
use crate::eval::bootstrap::bootstrap_ci;
use crate::eval::metrics::{accuracy, balanced_accuracy, class_f1, macro_auc, macro_f1, qwk};
use crate::model::gbt::argmax;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEntry {
    pub name: String,
    pub value: Option<f64>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub skipped_resamples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub class: u8,
    pub support: usize,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub protocol: String,
    pub n: usize,
    pub seed: u64,
    pub resamples: usize,
    pub level: f64,
    pub metrics: Vec<MetricEntry>,
    pub per_class: Vec<ClassEntry>,
}

impl MetricReport {
    pub fn get(&self, name: &str) -> Option<&MetricEntry> {
        self.metrics.iter().find(|m| m.name == name)
    }
}

type MetricFn<'a> = Box<dyn Fn(&[usize]) -> Option<f64> + Sync + 'a>;

/// Grading metrics on `(y, probs)` with percentile bootstrap intervals.
/// Metric `i` uses bootstrap seed `seed + i`.
pub fn evaluate_grading(
    protocol: &str,
    y: &[u8],
    probs: &[Vec<f64>],
    classes: usize,
    resamples: usize,
    level: f64,
    seed: u64,
) -> Result<MetricReport> {
    if y.len() != probs.len() {
        return Err(Error::LengthMismatch {
            expected: y.len(),
            found: probs.len(),
        });
    }
    let pred: Vec<u8> = probs.iter().map(|p| argmax(p) as u8).collect();
    let pred_ref = &pred;
    let pick = move |idx: &[usize]| -> (Vec<u8>, Vec<u8>) {
        (idx.iter().map(|&i| y[i]).collect(), idx.iter().map(|&i| pred_ref[i]).collect())
    };
    let metrics: Vec<(&str, MetricFn)> = vec![
        ("QWK", Box::new(move |idx| {
            let (a, b) = pick(idx);
            qwk(&a, &b, classes).ok()
        })),
        ("Accuracy", Box::new(move |idx| {
            let (a, b) = pick(idx);
            accuracy(&a, &b).ok()
        })),
        ("Macro F1", Box::new(move |idx| {
            let (a, b) = pick(idx);
            macro_f1(&a, &b).ok()
        })),
        ("Balanced accuracy", Box::new(move |idx| {
            let (a, b) = pick(idx);
            balanced_accuracy(&a, &b).ok()
        })),
        ("Macro AUC", Box::new(move |idx| {
            let a: Vec<u8> = idx.iter().map(|&i| y[i]).collect();
            let p: Vec<Vec<f64>> = idx.iter().map(|&i| probs[i].clone()).collect();
            macro_auc(&a, &p).ok().flatten()
        })),
    ];
    let all: Vec<usize> = (0..y.len()).collect();
    let mut entries = Vec::new();
    for (i, (name, f)) in metrics.iter().enumerate() {
        let value = f(&all);
        let (lo, hi, skipped) = if resamples > 0 {
            match bootstrap_ci(y.len(), resamples, level, seed.wrapping_add(i as u64), f) {
                Ok(r) => (Some(r.lo), Some(r.hi), r.skipped),
                Err(_) => (None, None, resamples),
            }
        } else {
            (None, None, 0)
        };
        entries.push(MetricEntry {
            name: name.to_string(),
            value,
            lo,
            hi,
            skipped_resamples: skipped,
        });
    }
    let per_class = (0..classes as u8)
        .map(|c| ClassEntry {
            class: c,
            support: y.iter().filter(|&&a| a == c).count(),
            f1: class_f1(y, pred_ref, c),
        })
        .collect();
    Ok(MetricReport {
        protocol: protocol.to_string(),
        n: y.len(),
        seed,
        resamples,
        level,
        metrics: entries,
        per_class,
    })
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
}

pub fn grading_markdown(title: &str, r: &MetricReport) -> String {
    let mut s = String::new();
    let pct = (r.level * 100.0).round();
    let _ = writeln!(s, "### {title}\n");
    let _ = writeln!(s, "n = {}, {} bootstrap resamples, seed {}\n", r.n, r.resamples, r.seed);
    let _ = writeln!(s, "| Metric | Value | {pct}% CI |");
    let _ = writeln!(s, "|---|---|---|");
    for m in &r.metrics {
        let ci = match (m.lo, m.hi) {
            (Some(lo), Some(hi)) => format!("[{lo:.4}, {hi:.4}]"),
            _ => "n/a".into(),
        };
        let _ = writeln!(s, "| {} | {} | {} |", m.name, fmt(m.value), ci);
    }
    let _ = writeln!(s, "\n| KL | Support | F1 |");
    let _ = writeln!(s, "|---|---|---|");
    for c in &r.per_class {
        let _ = writeln!(s, "| {} | {} | {:.4} |", c.class, c.support, c.f1);
    }
    s
}

pub fn family_ablation_markdown(rows: &[FamilyAblationRow]) -> String {
    let mut s = String::from("| Configuration | Dims | QWK | Accuracy |\n|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(s, "| {} | {} | {:.4} | {:.4} |", r.config, r.dims, r.qwk, r.accuracy);
    }
    s
}

pub fn intervention_markdown(rows: &[InterventionRow]) -> String {
    let mut s = String::from("| Intervention | Family | Dims | QWK | ΔQWK | AUC |\n|---|---|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {:.4} | {:+.4} | {} |",
            r.intervention,
            r.family,
            r.dims,
            r.qwk,
            r.delta_qwk,
            fmt(r.auc)
        );
    }
    s
}
