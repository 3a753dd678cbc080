//! Multiclass gradient-boosted regression trees with a softmax objective.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Normalizer;

pub const FORMAT_VERSION: u32 = 1;
const HESS_FLOOR: f64 = 1e-16;
const PRIOR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub l1_alpha: f64,
    pub l2_lambda: f64,
    pub min_child_weight: f64,
    pub class_count: usize,
    pub seed: u64,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            n_rounds: 300,
            max_depth: 6,
            learning_rate: 0.05,
            l1_alpha: 0.1,
            l2_lambda: 1.0,
            min_child_weight: 1.0,
            class_count: crate::KL_CLASSES,
            seed: 0,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_rounds < 1 {
            return bad("n_rounds must be at least 1");
        }
        if self.max_depth < 1 {
            return bad("max_depth must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must lie in (0, 1]");
        }
        if self.l1_alpha < 0.0 || self.l2_lambda < 0.0 || self.min_child_weight < 0.0 {
            return bad("regularization terms must be non-negative");
        }
        if self.class_count < 2 {
            return bad("class_count must be at least 2");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    /// Rows with `x[feature] < threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Output already scaled by the learning rate.
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] < threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, .. } => Some(*feature),
            Node::Leaf { .. } => None,
        })
    }
}

/// L1 soft-thresholding.
pub fn soft_threshold(g: f64, alpha: f64) -> f64 {
    if g > alpha {
        g - alpha
    } else if g < -alpha {
        g + alpha
    } else {
        0.0
    }
}

/// Unscaled Newton leaf weight.
pub fn leaf_weight(g: f64, h: f64, p: &GbtParams) -> f64 {
    -soft_threshold(g, p.l1_alpha) / (h + p.l2_lambda)
}

fn score(g: f64, h: f64, p: &GbtParams) -> f64 {
    let t = soft_threshold(g, p.l1_alpha);
    t * t / (h + p.l2_lambda)
}

/// Loss reduction of splitting (G, H) into (GL, HL) and the remainder.
pub fn split_gain(gl: f64, hl: f64, g: f64, h: f64, p: &GbtParams) -> f64 {
    0.5 * (score(gl, hl, p) + score(g - gl, h - hl, p) - score(g, h, p))
}

/// Column-major copy of the design matrix with per-feature sort orders.
struct Columns {
    cols: Vec<Vec<f64>>,
    sorted: Vec<Vec<u32>>,
}

impl Columns {
    fn new(x: &[Vec<f64>]) -> Columns {
        let d = x.first().map_or(0, Vec::len);
        let cols: Vec<Vec<f64>> = (0..d).map(|j| x.iter().map(|r| r[j]).collect()).collect();
        let sorted = cols
            .iter()
            .map(|c| {
                let mut idx: Vec<u32> = (0..c.len() as u32).collect();
                idx.sort_by(|&a, &b| c[a as usize].total_cmp(&c[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Columns { cols, sorted }
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
    gl: f64,
    hl: f64,
}

struct Open {
    node: usize,
    g: f64,
    h: f64,
}

/// Grows one regression tree level by level with exact greedy splits.
fn build_tree(data: &Columns, grad: &[f64], hess: &[f64], p: &GbtParams) -> Tree {
    let n = grad.len();
    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let mut open = vec![Open {
        node: 0,
        g: grad.iter().sum(),
        h: hess.iter().sum(),
    }];
    // slot of each row in `open`, or usize::MAX once it reached a leaf
    let mut slot = vec![0usize; n];

    for _ in 0..p.max_depth {
        if open.is_empty() {
            break;
        }
        let m = open.len();
        let mut best: Vec<Option<Candidate>> = vec![None; m];
        let mut gl = vec![0.0; m];
        let mut hl = vec![0.0; m];
        let mut last = vec![f64::NAN; m];
        for (feature, order) in data.sorted.iter().enumerate() {
            let col = &data.cols[feature];
            gl.iter_mut().for_each(|v| *v = 0.0);
            hl.iter_mut().for_each(|v| *v = 0.0);
            last.iter_mut().for_each(|v| *v = f64::NAN);
            for &r in order {
                let r = r as usize;
                let k = slot[r];
                if k == usize::MAX {
                    continue;
                }
                let v = col[r];
                let prev = last[k];
                if prev.is_finite() && v > prev {
                    let (g, h) = (open[k].g, open[k].h);
                    if hl[k] >= p.min_child_weight && h - hl[k] >= p.min_child_weight {
                        let gain = split_gain(gl[k], hl[k], g, h, p);
                        if gain > 0.0 && best[k].is_none_or(|b| gain > b.gain) {
                            let mid = 0.5 * (prev + v);
                            best[k] = Some(Candidate {
                                gain,
                                feature,
                                threshold: if mid > prev { mid } else { v },
                                gl: gl[k],
                                hl: hl[k],
                            });
                        }
                    }
                }
                gl[k] += grad[r];
                hl[k] += hess[r];
                last[k] = v;
            }
        }

        let mut next = Vec::new();
        // per open slot: (left slot, right slot, feature, threshold)
        let mut routes: Vec<Option<(usize, usize, usize, f64)>> = vec![None; m];
        for (k, o) in open.iter().enumerate() {
            match best[k] {
                Some(c) => {
                    let left = nodes.len();
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes[o.node] = Node::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left,
                        right: left + 1,
                    };
                    routes[k] = Some((next.len(), next.len() + 1, c.feature, c.threshold));
                    next.push(Open {
                        node: left,
                        g: c.gl,
                        h: c.hl,
                    });
                    next.push(Open {
                        node: left + 1,
                        g: o.g - c.gl,
                        h: o.h - c.hl,
                    });
                }
                None => {
                    nodes[o.node] = Node::Leaf {
                        value: p.learning_rate * leaf_weight(o.g, o.h, p),
                    };
                }
            }
        }
        for (r, s) in slot.iter_mut().enumerate() {
            if *s == usize::MAX {
                continue;
            }
            *s = match routes[*s] {
                Some((l, rt, f, t)) => {
                    if data.cols[f][r] < t {
                        l
                    } else {
                        rt
                    }
                }
                None => usize::MAX,
            };
        }
        open = next;
    }
    for o in &open {
        nodes[o.node] = Node::Leaf {
            value: p.learning_rate * leaf_weight(o.g, o.h, p),
        };
    }
    Tree { nodes }
}

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Inverse class-frequency weights normalized to mean 1.
pub fn inverse_frequency_weights(y: &[u8], classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; classes];
    for &c in y {
        counts[c as usize] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count() as f64;
    let n = y.len() as f64;
    y.iter().map(|&c| n / (present * counts[c as usize] as f64)).collect()
}

/// Trees and base scores, operating on already-normalized inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Booster {
    pub base_score: Vec<f64>,
    /// `trees[round][class]`
    pub trees: Vec<Vec<Tree>>,
}

impl Booster {
    pub fn raw_scores(&self, z: &[f64]) -> Vec<f64> {
        let mut s = self.base_score.clone();
        for round in &self.trees {
            for (k, t) in round.iter().enumerate() {
                s[k] += t.predict(z);
            }
        }
        s
    }

    pub fn predict_proba(&self, z: &[f64]) -> Vec<f64> {
        softmax(&self.raw_scores(z))
    }
}

fn weighted_loss(scores: &[Vec<f64>], y: &[u8], w: &[f64]) -> f64 {
    let mut total = 0.0;
    for ((s, &c), &wi) in scores.iter().zip(y).zip(w) {
        let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + s.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += wi * (lse - s[c as usize]);
    }
    total / w.iter().sum::<f64>()
}

/// Fits the booster; returns it with the weighted training loss before the
/// first round and after every round.
pub fn train_booster(
    z: &[Vec<f64>],
    y: &[u8],
    params: &GbtParams,
    weights: Option<&[f64]>,
) -> Result<(Booster, Vec<f64>)> {
    params.validate()?;
    let k = params.class_count;
    if z.is_empty() {
        return Err(Error::InsufficientData("no training rows".into()));
    }
    if y.len() != z.len() {
        return Err(Error::LengthMismatch {
            expected: z.len(),
            found: y.len(),
        });
    }
    let d = z[0].len();
    for (i, row) in z.iter().enumerate() {
        if row.len() != d {
            return Err(Error::LengthMismatch {
                expected: d,
                found: row.len(),
            });
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i, column: j });
        }
    }
    if let Some(&c) = y.iter().find(|&&c| c as usize >= k) {
        return Err(Error::LabelOutOfRange {
            label: c as usize,
            classes: k,
        });
    }
    let w: Vec<f64> = match weights {
        Some(w) => {
            if w.len() != y.len() {
                return Err(Error::LengthMismatch {
                    expected: y.len(),
                    found: w.len(),
                });
            }
            if w.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidConfig("sample weights must be positive".into()));
            }
            w.to_vec()
        }
        None => inverse_frequency_weights(y, k),
    };

    let total_w: f64 = w.iter().sum();
    let mut prior = vec![0.0; k];
    for (&c, &wi) in y.iter().zip(&w) {
        prior[c as usize] += wi / total_w;
    }
    let base_score: Vec<f64> = prior.iter().map(|p| p.max(PRIOR_FLOOR).ln()).collect();
    let mut booster = Booster {
        base_score: base_score.clone(),
        trees: Vec::new(),
    };
    let mut scores = vec![base_score; z.len()];
    let mut history = vec![weighted_loss(&scores, y, &w)];
    if prior.iter().filter(|&&p| p > 0.0).count() < 2 {
        log::warn!("training labels contain a single class; returning a base-score model");
        return Ok((booster, history));
    }

    let data = Columns::new(z);
    let n = z.len();
    let mut grad = vec![vec![0.0; n]; k];
    let mut hess = vec![vec![0.0; n]; k];
    for _ in 0..params.n_rounds {
        for (i, s) in scores.iter().enumerate() {
            let p = softmax(s);
            for c in 0..k {
                let target = if y[i] as usize == c { 1.0 } else { 0.0 };
                grad[c][i] = w[i] * (p[c] - target);
                hess[c][i] = w[i] * (p[c] * (1.0 - p[c])).max(HESS_FLOOR);
            }
        }
        let round: Vec<Tree> = (0..k).map(|c| build_tree(&data, &grad[c], &hess[c], params)).collect();
        for (row, s) in z.iter().zip(scores.iter_mut()) {
            for (c, t) in round.iter().enumerate() {
                s[c] += t.predict(row);
            }
        }
        booster.trees.push(round);
        history.push(weighted_loss(&scores, y, &w));
    }
    Ok((booster, history))
}

/// A trained Path A classifier: embedded normalizer plus boosted trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtEnsemble {
    pub format_version: u32,
    pub params: GbtParams,
    pub feature_names: Vec<String>,
    pub normalizer: Normalizer,
    pub base_score: Vec<f64>,
    pub trees: Vec<Vec<Tree>>,
}

impl GbtEnsemble {
    /// Fits the normalizer on `raw` and trains on the z-scored rows.
    pub fn fit(
        raw: &[Vec<f64>],
        y: &[u8],
        feature_names: &[&str],
        params: &GbtParams,
        weights: Option<&[f64]>,
    ) -> Result<(GbtEnsemble, Vec<f64>)> {
        if raw.is_empty() {
            return Err(Error::InsufficientData("no training rows".into()));
        }
        if raw[0].len() != feature_names.len() {
            return Err(Error::LengthMismatch {
                expected: feature_names.len(),
                found: raw[0].len(),
            });
        }
        let normalizer = Normalizer::fit(raw, "train")?;
        let z = normalizer.apply_rows(raw);
        let (booster, history) = train_booster(&z, y, params, weights)?;
        Ok((
            GbtEnsemble {
                format_version: FORMAT_VERSION,
                params: params.clone(),
                feature_names: feature_names.iter().map(|s| s.to_string()).collect(),
                normalizer,
                base_score: booster.base_score,
                trees: booster.trees,
            },
            history,
        ))
    }

    pub fn dims(&self) -> usize {
        self.feature_names.len()
    }

    fn check_dims(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dims() {
            return Err(Error::LengthMismatch {
                expected: self.dims(),
                found: x.len(),
            });
        }
        Ok(())
    }

    pub fn raw_scores_normalized(&self, z: &[f64]) -> Vec<f64> {
        let mut s = self.base_score.clone();
        for round in &self.trees {
            for (k, t) in round.iter().enumerate() {
                s[k] += t.predict(z);
            }
        }
        s
    }

    /// Class probabilities for a z-scored row.
    pub fn predict_proba_normalized(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(z)?;
        Ok(softmax(&self.raw_scores_normalized(z)))
    }

    /// Class probabilities for a raw (unnormalized) row.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(x)?;
        Ok(softmax(&self.raw_scores_normalized(&self.normalizer.apply(x))))
    }

    pub fn predict_proba_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.predict_proba(r)).collect()
    }

    pub fn predict_proba_rows_normalized(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.predict_proba_normalized(r)).collect()
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<u8>> {
        Ok(self.predict_proba_rows(rows)?.iter().map(|p| argmax(p) as u8).collect())
    }

    pub fn predict_normalized(&self, rows: &[Vec<f64>]) -> Result<Vec<u8>> {
        Ok(self
            .predict_proba_rows_normalized(rows)?
            .iter()
            .map(|p| argmax(p) as u8)
            .collect())
    }

    /// Sorted, deduplicated indices of every feature used by a split.
    pub fn used_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self.trees.iter().flatten().flat_map(Tree::split_features).collect();
        f.sort_unstable();
        f.dedup();
        f
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<GbtEnsemble> {
        let m: GbtEnsemble = serde_json::from_str(s)?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: m.format_version,
                expected: FORMAT_VERSION,
            });
        }
        Ok(m)
    }
}
