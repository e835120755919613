//! Random forest used as the global defect prediction model.
//!
//! CART trees with the Gini criterion, grown to purity on bootstrap samples
//! with `floor(sqrt(p))` candidate features per split. The forest probability
//! is the fraction of trees voting DEFECT. Tree `t` draws from the ChaCha8
//! stream `t` of the model seed, so training is deterministic and the trees
//! can be grown in parallel.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{fingerprint_names, Dataset, Instance, Label, MetricSchema};

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_N_TREES: usize = 100;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("training data must contain both DEFECT and CLEAN instances")]
    SingleClassTraining,
    #[error("labels must contain both DEFECT and CLEAN")]
    SingleClassLabels,
    #[error("instance `{0}` has no label")]
    UnlabeledInstance(String),
    #[error("expected {expected} features, got {found}")]
    SchemaMismatch { expected: usize, found: usize },
    #[error("model was trained on a different schema")]
    FingerprintMismatch,
    #[error("scores and labels differ in length ({scores} vs {labels})")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("n_trees must be positive")]
    NoTrees,
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ForestError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        defect: u32,
        clean: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Node 0 is the root.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn vote(&self, x: &[f64]) -> Label {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Split { feature, threshold, left, right } => {
                    at = if x[feature] <= threshold { left } else { right };
                }
                // ties go to DEFECT
                Node::Leaf { defect, clean } => {
                    return if defect >= clean { Label::Defect } else { Label::Clean };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub format_version: u32,
    pub n_trees: usize,
    pub rng_seed: u64,
    pub schema_fingerprint: String,
    pub feature_names: Vec<String>,
    pub trees: Vec<Tree>,
}

pub fn train_forest(train: &Dataset, n_trees: usize, seed: u64) -> Result<ForestModel> {
    if n_trees == 0 {
        return Err(ForestError::NoTrees);
    }
    let labels = train
        .instances
        .iter()
        .map(|i| i.label.ok_or_else(|| ForestError::UnlabeledInstance(i.id.clone())))
        .collect::<Result<Vec<_>>>()?;
    if !labels.contains(&Label::Defect) || !labels.contains(&Label::Clean) {
        return Err(ForestError::SingleClassTraining);
    }
    let rows: Vec<&[f64]> = train.instances.iter().map(|i| i.features.as_slice()).collect();
    let n_features = train.schema.len();
    let trees = (0..n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            grow_tree(&rows, &labels, n_features, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        format_version: MODEL_FORMAT_VERSION,
        n_trees,
        rng_seed: seed,
        schema_fingerprint: train.schema.fingerprint(),
        feature_names: train.schema.feature_names(),
        trees,
    })
}

fn gini(defect: f64, total: f64) -> f64 {
    if total == 0.0 {
        return 0.0;
    }
    let p = defect / total;
    2.0 * p * (1.0 - p)
}

struct Split {
    feature: usize,
    threshold: f64,
    score: f64,
}

/// Best Gini split of `idx` on one feature, as weighted child impurity.
fn best_split_on(
    feature: usize,
    idx: &[usize],
    rows: &[&[f64]],
    labels: &[Label],
    scratch: &mut Vec<(f64, bool)>,
) -> Option<Split> {
    scratch.clear();
    scratch.extend(idx.iter().map(|&i| (rows[i][feature], labels[i] == Label::Defect)));
    scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total = scratch.len() as f64;
    let total_defect = scratch.iter().filter(|s| s.1).count() as f64;
    let mut left_n = 0.0;
    let mut left_defect = 0.0;
    let mut best: Option<Split> = None;
    for w in 0..scratch.len() - 1 {
        left_n += 1.0;
        if scratch[w].1 {
            left_defect += 1.0;
        }
        let (lo, hi) = (scratch[w].0, scratch[w + 1].0);
        if lo == hi {
            continue;
        }
        let right_n = total - left_n;
        let score = left_n * gini(left_defect, left_n) + right_n * gini(total_defect - left_defect, right_n);
        if best.as_ref().is_none_or(|b| score < b.score) {
            let mid = lo + (hi - lo) / 2.0;
            let threshold = if mid < hi { mid } else { lo };
            best = Some(Split { feature, threshold, score });
        }
    }
    best
}

fn grow_tree(rows: &[&[f64]], labels: &[Label], n_features: usize, rng: &mut ChaCha8Rng) -> Tree {
    let n = rows.len();
    let bootstrap: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
    let mtry = ((n_features as f64).sqrt().floor() as usize).max(1);
    let mut features: Vec<usize> = (0..n_features).collect();
    let mut scratch = Vec::with_capacity(n);

    let mut nodes = vec![Node::Leaf { defect: 0, clean: 0 }];
    let mut stack = vec![(0usize, bootstrap)];
    while let Some((slot, idx)) = stack.pop() {
        let defect = idx.iter().filter(|&&i| labels[i] == Label::Defect).count();
        let clean = idx.len() - defect;
        let leaf = Node::Leaf { defect: defect as u32, clean: clean as u32 };
        if defect == 0 || clean == 0 {
            nodes[slot] = leaf;
            continue;
        }
        // visit features in random order until `mtry` non-constant ones were scored
        features.shuffle(rng);
        let mut best: Option<Split> = None;
        let mut scored = 0;
        for &f in &features {
            if scored == mtry {
                break;
            }
            let first = rows[idx[0]][f];
            if idx.iter().all(|&i| rows[i][f] == first) {
                continue;
            }
            scored += 1;
            if let Some(s) = best_split_on(f, &idx, rows, labels, &mut scratch) {
                if best.as_ref().is_none_or(|b| s.score < b.score) {
                    best = Some(s);
                }
            }
        }
        let Some(split) = best else {
            nodes[slot] = leaf;
            continue;
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| rows[i][split.feature] <= split.threshold);
        let left = nodes.len();
        let right = left + 1;
        nodes.push(Node::Leaf { defect: 0, clean: 0 });
        nodes.push(Node::Leaf { defect: 0, clean: 0 });
        nodes[slot] = Node::Split { feature: split.feature, threshold: split.threshold, left, right };
        stack.push((right, right_idx));
        stack.push((left, left_idx));
    }
    Tree { nodes }
}

impl ForestModel {
    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.feature_names.len() {
            return Err(ForestError::SchemaMismatch { expected: self.feature_names.len(), found: x.len() });
        }
        Ok(())
    }

    pub fn check_schema(&self, schema: &MetricSchema) -> Result<()> {
        if schema.fingerprint() != self.schema_fingerprint {
            return Err(ForestError::FingerprintMismatch);
        }
        Ok(())
    }

    pub fn defect_votes(&self, x: &[f64]) -> Result<usize> {
        self.check_len(x)?;
        Ok(self.trees.iter().filter(|t| t.vote(x) == Label::Defect).count())
    }

    /// Fraction of trees voting DEFECT.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        Ok(self.defect_votes(x)? as f64 / self.trees.len() as f64)
    }

    /// Majority vote; an even split goes to DEFECT.
    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        let votes = self.defect_votes(x)?;
        Ok(label_for_votes(votes, self.trees.len()))
    }

    pub fn predict_instance(&self, inst: &Instance) -> Result<Label> {
        self.predict(&inst.features)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: ForestModel = serde_json::from_str(text)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(ForestError::UnsupportedVersion(model.format_version));
        }
        if model.schema_fingerprint != fingerprint_names(model.feature_names.iter().map(String::as_str)) {
            return Err(ForestError::FingerprintMismatch);
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

pub(crate) fn label_for_votes(defect_votes: usize, n_trees: usize) -> Label {
    if 2 * defect_votes >= n_trees {
        Label::Defect
    } else {
        Label::Clean
    }
}

/// Probability threshold rule shared with `predict`: `p >= 0.5` is DEFECT.
pub fn label_for_probability(p: f64) -> Label {
    if p >= 0.5 {
        Label::Defect
    } else {
        Label::Clean
    }
}

/// Area under the ROC curve in the Mann-Whitney form: the probability that a
/// random DEFECT instance outscores a random CLEAN one, ties counting half.
pub fn auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(ForestError::LengthMismatch { scores: scores.len(), labels: labels.len() });
    }
    let n_defect = labels.iter().filter(|&&l| l == Label::Defect).count();
    let n_clean = labels.len() - n_defect;
    if n_defect == 0 || n_clean == 0 {
        return Err(ForestError::SingleClassLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of mid-ranks (1-based) over DEFECT instances
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let mid_rank = (start + 1 + end) as f64 / 2.0;
        let defects = order[start..end].iter().filter(|&&i| labels[i] == Label::Defect).count();
        rank_sum += mid_rank * defects as f64;
        start = end;
    }
    let nd = n_defect as f64;
    let u = rank_sum - nd * (nd + 1.0) / 2.0;
    Ok(u / (nd * n_clean as f64))
}
