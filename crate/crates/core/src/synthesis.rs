//! Synthetic neighbours by crossover and mutation, labelled by the global model.

use std::io::Write;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Instance, Label};
use crate::forest::{ForestError, ForestModel};
use crate::neighborhood::NeighborhoodSample;

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 parent instances, found {0}")]
    TooFewNeighbors(usize),
    #[error("invalid synthesis config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ForestError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SynthesisError>;

/// Where crossover and mutation parents come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ParentPool {
    #[default]
    Neighborhood,
    Training,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    pub n_synthetic: usize,
    pub crossover_fraction: f64,
    pub rng_seed: u64,
    pub clip_to_train_range: bool,
    pub parent_pool: ParentPool,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            n_synthetic: 1000,
            crossover_fraction: 0.5,
            rng_seed: 0,
            clip_to_train_range: true,
            parent_pool: ParentPool::Neighborhood,
        }
    }
}

impl SynthesisConfig {
    pub fn n_crossover(&self) -> usize {
        (self.n_synthetic as f64 * self.crossover_fraction).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Nearest,
    Crossover,
    Mutation,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Nearest => "nearest",
            Provenance::Crossover => "crossover",
            Provenance::Mutation => "mutation",
        }
    }
}

/// Nearest plus synthetic instances with the model's predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalLabeledSet {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub predictions: Vec<Label>,
    pub provenance: Vec<Provenance>,
    /// Training ids for nearest rows, `synthetic-<n>` for generated rows.
    pub ids: Vec<String>,
}

impl LocalLabeledSet {
    /// Builds a set from precomputed rows and predictions (all marked nearest).
    pub fn from_rows(feature_names: Vec<String>, rows: Vec<Vec<f64>>, predictions: Vec<Label>) -> Self {
        let n = rows.len();
        Self {
            feature_names,
            rows,
            predictions,
            provenance: vec![Provenance::Nearest; n],
            ids: (0..n).map(|i| format!("row-{i}")).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn count_provenance(&self, p: Provenance) -> usize {
        self.provenance.iter().filter(|&&q| q == p).count()
    }

    pub fn count_label(&self, label: Label) -> usize {
        self.predictions.iter().filter(|&&l| l == label).count()
    }

    /// Writes `id, features..., prediction, provenance` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["File".to_string()];
        header.extend(self.feature_names.iter().cloned());
        header.push("prediction".into());
        header.push("provenance".into());
        w.write_record(&header).map_err(csv_io)?;
        for i in 0..self.len() {
            let mut record = vec![self.ids[i].clone()];
            record.extend(self.rows[i].iter().map(f64::to_string));
            record.push(self.predictions[i].to_string());
            record.push(self.provenance[i].as_str().to_string());
            w.write_record(&record).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> SynthesisError {
    SynthesisError::Io(std::io::Error::other(e))
}

/// `x + (y - x) * alpha`
pub fn crossover(x: &[f64], y: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return Err(SynthesisError::LengthMismatch(x.len(), y.len()));
    }
    Ok(x.iter()
        .zip(y)
        .map(|(&a, &b)| {
            if alpha == 0.0 {
                a
            } else if alpha == 1.0 {
                b
            } else {
                // rounding may overshoot a parent by an ulp
                (a + (b - a) * alpha).clamp(a.min(b), a.max(b))
            }
        })
        .collect())
}

/// `x + (y - z) * mu`
pub fn mutation(x: &[f64], y: &[f64], z: &[f64], mu: f64) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return Err(SynthesisError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() != z.len() {
        return Err(SynthesisError::LengthMismatch(x.len(), z.len()));
    }
    Ok(x.iter().zip(y.iter().zip(z)).map(|(&a, (&b, &c))| if b == c { a } else { a + (b - c) * mu }).collect())
}

/// Local set whose parents are the selected neighbours.
pub fn generate_local_set(
    sample: &NeighborhoodSample,
    model: &ForestModel,
    cfg: &SynthesisConfig,
) -> Result<LocalLabeledSet> {
    generate_local_set_with_pool(sample, &sample.selected, model, cfg)
}

/// Local set with parents drawn from `pool` instead of the neighbourhood.
/// The combined set still holds the neighbourhood's nearest instances.
pub fn generate_local_set_with_pool(
    sample: &NeighborhoodSample,
    pool: &[Instance],
    model: &ForestModel,
    cfg: &SynthesisConfig,
) -> Result<LocalLabeledSet> {
    if pool.len() < 2 {
        return Err(SynthesisError::TooFewNeighbors(pool.len()));
    }
    if !(0.0..=1.0).contains(&cfg.crossover_fraction) {
        return Err(SynthesisError::InvalidConfig(format!(
            "crossover_fraction {} outside [0, 1]",
            cfg.crossover_fraction
        )));
    }
    if cfg.n_synthetic == 0 {
        return Err(SynthesisError::InvalidConfig("n_synthetic must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let n_crossover = cfg.n_crossover();
    let n_mutation = cfg.n_synthetic - n_crossover;

    let mut rows: Vec<Vec<f64>> = sample.selected.iter().map(|i| i.features.clone()).collect();
    let mut ids: Vec<String> = sample.selected.iter().map(|i| i.id.clone()).collect();
    let mut provenance = vec![Provenance::Nearest; rows.len()];

    let parent = |k: usize| pool[k].features.as_slice();
    for _ in 0..n_crossover {
        let pick = index::sample(&mut rng, pool.len(), 2);
        let alpha: f64 = rng.gen();
        let child = crossover(parent(pick.index(0)), parent(pick.index(1)), alpha)?;
        rows.push(child);
        provenance.push(Provenance::Crossover);
    }
    for _ in 0..n_mutation {
        let (a, b, c) = if pool.len() >= 3 {
            let pick = index::sample(&mut rng, pool.len(), 3);
            (pick.index(0), pick.index(1), pick.index(2))
        } else {
            (rng.gen_range(0..pool.len()), rng.gen_range(0..pool.len()), rng.gen_range(0..pool.len()))
        };
        let mu = rng.gen_range(0.5..=1.0);
        let mut child = mutation(parent(a), parent(b), parent(c), mu)?;
        if cfg.clip_to_train_range {
            sample.train_range.clamp(&mut child);
        }
        rows.push(child);
        provenance.push(Provenance::Mutation);
    }
    let first_synthetic = ids.len();
    ids.extend((0..cfg.n_synthetic).map(|i| format!("synthetic-{i}")));
    debug_assert_eq!(ids.len(), first_synthetic + cfg.n_synthetic);

    let predictions = rows.par_iter().map(|r| model.predict(r)).collect::<std::result::Result<Vec<_>, _>>()?;

    Ok(LocalLabeledSet { feature_names: model.feature_names.clone(), rows, predictions, provenance, ids })
}
