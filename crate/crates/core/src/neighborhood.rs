//! Nearest-instance selection around the file being explained.
//!
//! Similarities use an exponential kernel over z-scored Euclidean distance.
//! The neighbourhood boundary is the lower of the two per-class N-th best
//! similarities, so the selection always holds the top N of each class.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, DatasetError, FeatureRange, Instance, Label, Normalizer};

#[derive(Debug, Error)]
pub enum NeighborhoodError {
    #[error("vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("training data is empty")]
    EmptyTraining,
    #[error("training data must contain both classes")]
    SingleClassTraining,
    #[error("training instance `{0}` has no label")]
    UnlabeledInstance(String),
    #[error("invalid neighbourhood config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

pub type Result<T> = std::result::Result<T, NeighborhoodError>;

pub const DEFAULT_TOP_N: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodConfig {
    pub top_n: usize,
    /// Kernel width on z-scored distance; `None` means `0.75 * sqrt(p)`.
    pub kernel_width: Option<f64>,
}

impl Default for NeighborhoodConfig {
    fn default() -> Self {
        Self { top_n: DEFAULT_TOP_N, kernel_width: None }
    }
}

impl NeighborhoodConfig {
    pub fn resolved_width(&self, n_features: usize) -> f64 {
        self.kernel_width.unwrap_or_else(|| 0.75 * (n_features as f64).sqrt())
    }

    fn validate(&self, n_features: usize) -> Result<f64> {
        if self.top_n == 0 {
            return Err(NeighborhoodError::InvalidConfig("top_n must be at least 1".into()));
        }
        let width = self.resolved_width(n_features);
        if !(width > 0.0 && width.is_finite()) {
            return Err(NeighborhoodError::InvalidConfig(format!("kernel width {width} must be positive")));
        }
        Ok(width)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodSample {
    /// Selected training instances, in training order.
    pub selected: Vec<Instance>,
    pub similarities: Vec<f64>,
    pub similarity_threshold: f64,
    pub top_defect_ids: Vec<String>,
    pub top_clean_ids: Vec<String>,
    /// Min/max of every feature over the whole training release.
    pub train_range: FeatureRange,
}

/// `exp(-d^2 / sigma^2)` for Euclidean distance `d`.
pub fn similarity(a: &[f64], b: &[f64], sigma: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(NeighborhoodError::LengthMismatch(a.len(), b.len()));
    }
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((-d2 / (sigma * sigma)).exp())
}

/// Threshold rule on precomputed similarities: the lower of the two per-class
/// N-th largest scores. A class with fewer than N members contributes its
/// smallest score.
pub fn neighborhood_threshold(defect_sims: &[f64], clean_sims: &[f64], top_n: usize) -> Option<f64> {
    let nth = |sims: &[f64]| -> Option<f64> {
        let mut sorted = sims.to_vec();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let k = top_n.min(sorted.len());
        (k > 0).then(|| sorted[k - 1])
    };
    Some(nth(defect_sims)?.min(nth(clean_sims)?))
}

pub fn select_neighborhood(
    train: &Dataset,
    normalizer: &Normalizer,
    i_explain: &Instance,
    cfg: &NeighborhoodConfig,
) -> Result<NeighborhoodSample> {
    if train.is_empty() {
        return Err(NeighborhoodError::EmptyTraining);
    }
    let width = cfg.validate(train.schema.len())?;
    let target = normalizer.apply(&i_explain.features)?;

    let mut candidates = Vec::with_capacity(train.len());
    for inst in &train.instances {
        if inst.id == i_explain.id {
            continue;
        }
        let label = inst.label.ok_or_else(|| NeighborhoodError::UnlabeledInstance(inst.id.clone()))?;
        let sim = similarity(&normalizer.apply(&inst.features)?, &target, width)?;
        candidates.push((inst, label, sim));
    }

    let top_ids = |class: Label| -> Vec<(String, f64)> {
        let mut of_class: Vec<_> = candidates.iter().filter(|c| c.1 == class).map(|c| (c.0.id.clone(), c.2)).collect();
        // stable: equal scores keep training order
        of_class.sort_by(|a, b| b.1.total_cmp(&a.1));
        of_class.truncate(cfg.top_n);
        of_class
    };
    let top_defect = top_ids(Label::Defect);
    let top_clean = top_ids(Label::Clean);
    let (Some(d_last), Some(c_last)) = (top_defect.last(), top_clean.last()) else {
        return Err(NeighborhoodError::SingleClassTraining);
    };
    let threshold = d_last.1.min(c_last.1);

    let mut selected = Vec::new();
    let mut similarities = Vec::new();
    for (inst, _, sim) in &candidates {
        if *sim >= threshold {
            selected.push((*inst).clone());
            similarities.push(*sim);
        }
    }
    Ok(NeighborhoodSample {
        selected,
        similarities,
        similarity_threshold: threshold,
        top_defect_ids: top_defect.into_iter().map(|t| t.0).collect(),
        top_clean_ids: top_clean.into_iter().map(|t| t.0).collect(),
        train_range: train.feature_range(),
    })
}
