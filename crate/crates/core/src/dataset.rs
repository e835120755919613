//! Release-level metric tables.
//!
//! One CSV per release, first row header, one row per file. The schema names
//! the feature columns, the id column (default `File`) and the label column
//! (default `RealBug`). Rows with blank or non-numeric cells are rejected.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::metrics::{self, MetricGroup, STUDIED_METRICS};

pub const DEFAULT_ID_COLUMN: &str = "File";
pub const DEFAULT_LABEL_COLUMN: &str = "RealBug";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: cannot parse `{value}`")]
    NonNumericCell { row: usize, column: String, value: String },
    #[error("duplicate instance id `{0}`")]
    DuplicateId(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("vector length {found} does not match schema length {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DatasetError>;

/// Class label of a file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Label {
    Defect,
    Clean,
}

impl Label {
    pub const BOTH: [Label; 2] = [Label::Defect, Label::Clean];

    pub fn negate(self) -> Label {
        match self {
            Label::Defect => Label::Clean,
            Label::Clean => Label::Defect,
        }
    }

    /// Accepts `TRUE/FALSE`, `1/0` and `DEFECT/CLEAN` (case-insensitive).
    pub fn parse(raw: &str) -> Option<Label> {
        match raw.trim().to_ascii_uppercase().as_str() {
            "TRUE" | "1" | "DEFECT" => Some(Label::Defect),
            "FALSE" | "0" | "CLEAN" => Some(Label::Clean),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Defect => "DEFECT",
            Label::Clean => "CLEAN",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    pub group: MetricGroup,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricSchema {
    features: Vec<Feature>,
    label_column: String,
    id_column: String,
}

#[derive(Deserialize)]
struct SchemaFile {
    features: Vec<SchemaFileFeature>,
    #[serde(default = "default_label")]
    label_column: String,
    #[serde(default = "default_id")]
    id_column: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SchemaFileFeature {
    Name(String),
    Full { name: String, group: Option<MetricGroup> },
}

fn default_label() -> String {
    DEFAULT_LABEL_COLUMN.to_string()
}

fn default_id() -> String {
    DEFAULT_ID_COLUMN.to_string()
}

impl MetricSchema {
    pub fn new(features: Vec<Feature>, label_column: &str, id_column: &str) -> Result<Self> {
        if features.is_empty() {
            return Err(DatasetError::InvalidSchema("no features".into()));
        }
        let mut seen = HashSet::new();
        for f in &features {
            if !seen.insert(f.name.as_str()) {
                return Err(DatasetError::InvalidSchema(format!("duplicate feature `{}`", f.name)));
            }
        }
        for col in [label_column, id_column] {
            if seen.contains(col) {
                return Err(DatasetError::InvalidSchema(format!("`{col}` is both a feature and a key column")));
            }
        }
        if label_column == id_column {
            return Err(DatasetError::InvalidSchema("label and id columns coincide".into()));
        }
        Ok(Self { features, label_column: label_column.to_string(), id_column: id_column.to_string() })
    }

    /// Schema from plain feature names; groups come from the metric catalogue
    /// when the name is known, otherwise `code`.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let features = names
            .iter()
            .map(|n| {
                let name = n.as_ref().to_string();
                let group = metrics::lookup(&name).map_or(MetricGroup::Code, |i| i.group);
                Feature { name, group }
            })
            .collect();
        Self::new(features, DEFAULT_LABEL_COLUMN, DEFAULT_ID_COLUMN)
    }

    /// The 65 studied code, process and ownership metrics.
    pub fn studied() -> Self {
        let features = STUDIED_METRICS.iter().map(|i| Feature { name: i.name.to_string(), group: i.group }).collect();
        Self::new(features, DEFAULT_LABEL_COLUMN, DEFAULT_ID_COLUMN).expect("catalogue is valid")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: SchemaFile = serde_json::from_str(text)?;
        let features = file
            .features
            .into_iter()
            .map(|f| match f {
                SchemaFileFeature::Name(name) => {
                    let group = metrics::lookup(&name).map_or(MetricGroup::Code, |i| i.group);
                    Feature { name, group }
                }
                SchemaFileFeature::Full { name, group } => {
                    let group = group.or_else(|| metrics::lookup(&name).map(|i| i.group)).unwrap_or(MetricGroup::Code);
                    Feature { name, group }
                }
            })
            .collect();
        Self::new(features, &file.label_column, &file.id_column)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Every header column except the default id and label columns, in file order.
    pub fn from_csv_header(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let names: Vec<String> = rdr
            .headers()?
            .iter()
            .filter(|h| *h != DEFAULT_ID_COLUMN && *h != DEFAULT_LABEL_COLUMN)
            .map(str::to_string)
            .collect();
        Self::from_names(&names)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn label_column(&self) -> &str {
        &self.label_column
    }

    pub fn id_column(&self) -> &str {
        &self.id_column
    }

    /// Column index of a feature. Catalogue aliases (`LOCDeclaration`,
    /// `MinorCommit`, ...) resolve to their canonical column.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        if let Some(i) = self.features.iter().position(|f| f.name == name) {
            return Some(i);
        }
        let canonical = metrics::canonical_name(name)?;
        self.features.iter().position(|f| f.name == canonical)
    }

    /// Hex SHA-256 over the ordered feature names.
    pub fn fingerprint(&self) -> String {
        fingerprint_names(self.features.iter().map(|f| f.name.as_str()))
    }
}

pub(crate) fn fingerprint_names<'a>(names: impl Iterator<Item = &'a str>) -> String {
    let mut hasher = Sha256::new();
    for name in names {
        hasher.update(name.as_bytes());
        hasher.update([0u8]);
    }
    hex_string(&hasher.finalize())
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub features: Vec<f64>,
    pub label: Option<Label>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: MetricSchema,
    pub release_id: String,
    pub instances: Vec<Instance>,
}

impl Dataset {
    pub fn new(schema: MetricSchema, release_id: &str, instances: Vec<Instance>) -> Result<Self> {
        let mut ids = HashSet::new();
        for inst in &instances {
            if inst.features.len() != schema.len() {
                return Err(DatasetError::LengthMismatch { expected: schema.len(), found: inst.features.len() });
            }
            if !ids.insert(inst.id.as_str()) {
                return Err(DatasetError::DuplicateId(inst.id.clone()));
            }
        }
        Ok(Self { schema, release_id: release_id.to_string(), instances })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Instance> {
        self.instances.iter().find(|i| i.id == id)
    }

    /// Feature value by name (aliases allowed).
    pub fn value(&self, inst: &Instance, feature: &str) -> Option<f64> {
        self.schema.index_of(feature).map(|i| inst.features[i])
    }

    pub fn count_label(&self, label: Label) -> usize {
        self.instances.iter().filter(|i| i.label == Some(label)).count()
    }

    /// Per-feature (min, max) over all instances.
    pub fn feature_range(&self) -> FeatureRange {
        let p = self.schema.len();
        let mut min = vec![f64::INFINITY; p];
        let mut max = vec![f64::NEG_INFINITY; p];
        for inst in &self.instances {
            for (j, &v) in inst.features.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        FeatureRange { min, max }
    }
}

/// Observed per-feature bounds of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRange {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl FeatureRange {
    pub fn clamp(&self, values: &mut [f64]) {
        for ((v, lo), hi) in values.iter_mut().zip(&self.min).zip(&self.max) {
            if lo <= hi {
                *v = v.clamp(*lo, *hi);
            }
        }
    }
}

/// Reads one release CSV. Columns may appear in any order; extra columns are
/// ignored. The label column is optional: when absent every label is `None`.
pub fn load_dataset(path: &Path, schema: &MetricSchema) -> Result<Dataset> {
    let release_id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let file = File::open(path)?;
    read_dataset(file, schema, &release_id)
}

pub fn read_dataset<R: std::io::Read>(reader: R, schema: &MetricSchema, release_id: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let position = |name: &str| headers.iter().position(|h| h == name);

    let id_col = position(schema.id_column()).ok_or_else(|| DatasetError::MissingColumn(schema.id_column().into()))?;
    let label_col = position(schema.label_column());
    let feature_cols = schema
        .features()
        .iter()
        .map(|f| position(&f.name).ok_or_else(|| DatasetError::MissingColumn(f.name.clone())))
        .collect::<Result<Vec<_>>>()?;

    let mut instances = Vec::new();
    let mut ids = HashSet::new();
    for (row_idx, record) in rdr.records().enumerate() {
        let record = record?;
        // 1-based data row numbering, header excluded
        let row = row_idx + 1;
        let id = record.get(id_col).unwrap_or("").to_string();
        let mut features = Vec::with_capacity(feature_cols.len());
        for (f, &col) in schema.features().iter().zip(&feature_cols) {
            let cell = record.get(col).unwrap_or("");
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => features.push(v),
                _ => return Err(DatasetError::NonNumericCell { row, column: f.name.clone(), value: cell.to_string() }),
            }
        }
        let label = match label_col {
            Some(col) => {
                let cell = record.get(col).unwrap_or("");
                Some(Label::parse(cell).ok_or_else(|| DatasetError::NonNumericCell {
                    row,
                    column: schema.label_column().to_string(),
                    value: cell.to_string(),
                })?)
            }
            None => None,
        };
        if !ids.insert(id.clone()) {
            return Err(DatasetError::DuplicateId(id));
        }
        instances.push(Instance { id, features, label });
    }
    Ok(Dataset { schema: schema.clone(), release_id: release_id.to_string(), instances })
}

/// Z-score parameters fitted on a training release.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Fits per-feature mean and population standard deviation.
pub fn zscore_fit(train: &Dataset) -> Result<Normalizer> {
    if train.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    let n = train.len() as f64;
    let p = train.schema.len();
    let mut mean = vec![0.0; p];
    for inst in &train.instances {
        for (m, v) in mean.iter_mut().zip(&inst.features) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; p];
    for inst in &train.instances {
        for ((s, v), m) in var.iter_mut().zip(&inst.features).zip(&mean) {
            let d = v - m;
            *s += d * d;
        }
    }
    let std = var.into_iter().map(|s| (s / n).sqrt()).collect();
    Ok(Normalizer { mean, std })
}

impl Normalizer {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// `(x - mean) / std`, with zero-variance features mapped to 0.
    pub fn apply(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.mean.len() {
            return Err(DatasetError::LengthMismatch { expected: self.mean.len(), found: values.len() });
        }
        Ok(values
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| if *s > 0.0 { (x - m) / s } else { 0.0 })
            .collect())
    }
}

pub fn zscore_apply(norm: &Normalizer, inst: &Instance) -> Result<Vec<f64>> {
    norm.apply(&inst.features)
}
