//! End-to-end runs: train on release k-1, explain files of release k, and
//! evaluate the guidance against k and k+1.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{self, hex_string, Dataset, FeatureRange, Instance, Label, MetricSchema, Normalizer};
use crate::evaluation::{
    self, ApplicabilityOutcome, ApplicabilityTally, RuleQualitySummary, StabilityMode, StabilityReport,
};
use crate::forest::{self, ForestModel};
use crate::guidance::{self, BestRuleOrder, GuidancePlan};
use crate::miner::{self, MinerConfig, MinerError, Objective, RuleSet};
use crate::neighborhood::{self, NeighborhoodConfig};
use crate::report;
use crate::synthesis::{self, ParentPool, Provenance, SynthesisConfig};

/// Caps the worker pool when no explicit thread count is configured.
pub const THREADS_ENV: &str = "DEFECT_GUIDANCE_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Load,
    Train,
    Predict,
    Neighborhood,
    Synthesis,
    Mining,
    Guidance,
    Report,
    Evaluate,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Load => "load",
            Stage::Train => "train",
            Stage::Predict => "predict",
            Stage::Neighborhood => "neighborhood",
            Stage::Synthesis => "synthesis",
            Stage::Mining => "mining",
            Stage::Guidance => "guidance",
            Stage::Report => "report",
            Stage::Evaluate => "evaluate",
            Stage::Write => "write",
        };
        f.write_str(s)
    }
}

fn file_suffix(file: &Option<String>) -> String {
    file.as_ref().map(|f| format!(" for `{f}`")).unwrap_or_default()
}

#[derive(Debug, Error)]
#[error("{stage} stage failed{}: {source}", file_suffix(.file))]
pub struct PipelineError {
    pub stage: Stage,
    pub file: Option<String>,
    #[source]
    pub source: Box<dyn std::error::Error + Send + Sync>,
}

impl PipelineError {
    pub fn new(stage: Stage, source: impl Into<Box<dyn std::error::Error + Send + Sync>>) -> Self {
        Self { stage, file: None, source: source.into() }
    }

    pub fn for_file(stage: Stage, file: &str, source: impl Into<Box<dyn std::error::Error + Send + Sync>>) -> Self {
        Self { stage, file: Some(file.to_string()), source: source.into() }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Self::new(Stage::Config, msg.into())
    }

    pub fn is_config(&self) -> bool {
        self.stage == Stage::Config
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

/// Settings for explaining one file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainConfig {
    pub neighborhood: NeighborhoodConfig,
    /// `rng_seed` is replaced per file.
    pub synthesis: SynthesisConfig,
    pub miner: MinerConfig,
    pub objectives: Vec<Objective>,
    pub best_rule_order: BestRuleOrder,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            neighborhood: NeighborhoodConfig::default(),
            synthesis: SynthesisConfig::default(),
            miner: MinerConfig::default(),
            objectives: Objective::ALL.to_vec(),
            best_rule_order: BestRuleOrder::default(),
        }
    }
}

impl ExplainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.objectives.is_empty() {
            return Err(PipelineError::config("at least one objective is required"));
        }
        if self.neighborhood.top_n == 0 {
            return Err(PipelineError::config("top-n must be at least 1"));
        }
        if self.synthesis.n_synthetic == 0 {
            return Err(PipelineError::config("n-synthetic must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.synthesis.crossover_fraction) {
            return Err(PipelineError::config("crossover fraction must lie in [0, 1]"));
        }
        let m = &self.miner;
        if m.k == 0 || m.max_len == 0 || m.bins < 2 {
            return Err(PipelineError::config("k and max-len must be positive and bins at least 2"));
        }
        if !(m.alpha > 0.0 && m.alpha <= 1.0) {
            return Err(PipelineError::config("alpha must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&m.min_coverage) {
            return Err(PipelineError::config("min coverage must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Seed for one file, stable under reordering of the release.
pub fn instance_seed(global: u64, id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(global.to_le_bytes());
    h.update(id.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodSummary {
    pub similarity_threshold: f64,
    pub kernel_width: f64,
    pub n_selected: usize,
    pub top_defect_ids: Vec<String>,
    pub top_clean_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSetSummary {
    pub n_rows: usize,
    pub nearest: usize,
    pub crossover: usize,
    pub mutation: usize,
    pub predicted_defect: usize,
    pub predicted_clean: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub instance_id: String,
    pub prediction: Label,
    pub probability: f64,
    pub seed: u64,
    pub feature_names: Vec<String>,
    pub train_range: FeatureRange,
    pub neighborhood: NeighborhoodSummary,
    pub local_set: LocalSetSummary,
    pub rulesets: Vec<RuleSet>,
    pub plan: GuidancePlan,
}

impl Explanation {
    pub fn schema(&self) -> std::result::Result<MetricSchema, dataset::DatasetError> {
        MetricSchema::from_names(&self.feature_names)
    }

    /// Writes the bullet report next to other reports in `dir`. Empty plans
    /// produce nothing.
    pub fn emit_report(&self, dir: &Path) -> Result<Option<(PathBuf, PathBuf)>> {
        if self.plan.empty {
            return Ok(None);
        }
        let schema = self.schema().map_err(|e| PipelineError::for_file(Stage::Report, &self.instance_id, e))?;
        report::emit_bullet_report(&self.plan, &schema, &self.train_range, dir)
            .map(Some)
            .map_err(|e| PipelineError::for_file(Stage::Report, &self.instance_id, e))
    }
}

/// Runs neighbourhood selection, synthesis, mining for every objective and
/// guidance selection for one file.
pub fn explain_instance(
    model: &ForestModel,
    train: &Dataset,
    normalizer: &Normalizer,
    inst: &Instance,
    cfg: &ExplainConfig,
    seed: u64,
) -> Result<Explanation> {
    let id = inst.id.as_str();
    let probability =
        model.predict_proba(&inst.features).map_err(|e| PipelineError::for_file(Stage::Predict, id, e))?;
    let prediction = forest::label_for_probability(probability);

    let sample = neighborhood::select_neighborhood(train, normalizer, inst, &cfg.neighborhood)
        .map_err(|e| PipelineError::for_file(Stage::Neighborhood, id, e))?;

    let syn = SynthesisConfig { rng_seed: seed, ..cfg.synthesis.clone() };
    let local = match syn.parent_pool {
        ParentPool::Neighborhood => synthesis::generate_local_set(&sample, model, &syn),
        ParentPool::Training => synthesis::generate_local_set_with_pool(&sample, &train.instances, model, &syn),
    }
    .map_err(|e| PipelineError::for_file(Stage::Synthesis, id, e))?;

    let catalog =
        miner::discretize(&local, cfg.miner.bins).map_err(|e| PipelineError::for_file(Stage::Mining, id, e))?;
    let rulesets = match miner::mine_objectives(&local, &catalog, &cfg.miner, &cfg.objectives) {
        Ok(sets) => sets,
        // the model labels the whole neighbourhood one way: nothing to contrast
        Err(MinerError::SingleClassLocalSet) => cfg
            .objectives
            .iter()
            .map(|&objective| RuleSet { objective, defect: Vec::new(), clean: Vec::new(), no_rules_found: true })
            .collect(),
        Err(e) => return Err(PipelineError::for_file(Stage::Mining, id, e)),
    };

    let plan = guidance::build_guidance(&rulesets, &train.schema, inst, prediction, probability, &cfg.best_rule_order)
        .map_err(|e| PipelineError::for_file(Stage::Guidance, id, e))?;

    Ok(Explanation {
        instance_id: inst.id.clone(),
        prediction,
        probability,
        seed,
        feature_names: train.schema.feature_names(),
        train_range: sample.train_range.clone(),
        neighborhood: NeighborhoodSummary {
            similarity_threshold: sample.similarity_threshold,
            kernel_width: cfg.neighborhood.resolved_width(train.schema.len()),
            n_selected: sample.selected.len(),
            top_defect_ids: sample.top_defect_ids.clone(),
            top_clean_ids: sample.top_clean_ids.clone(),
        },
        local_set: LocalSetSummary {
            n_rows: local.len(),
            nearest: local.count_provenance(Provenance::Nearest),
            crossover: local.count_provenance(Provenance::Crossover),
            mutation: local.count_provenance(Provenance::Mutation),
            predicted_defect: local.count_label(Label::Defect),
            predicted_clean: local.count_label(Label::Clean),
        },
        rulesets,
        plan,
    })
}

/// Reruns the explanation of `inst` once per seed and reports how stable the
/// confidence-optimised feature sets are.
pub fn explanation_stability(
    model: &ForestModel,
    train: &Dataset,
    normalizer: &Normalizer,
    inst: &Instance,
    cfg: &ExplainConfig,
    seeds: &[u64],
    mode: StabilityMode,
) -> std::result::Result<StabilityReport, evaluation::EvaluationError> {
    // only the confidence rule sets are compared, so skip the other searches
    let cfg = ExplainConfig { objectives: vec![Objective::Confidence], ..cfg.clone() };
    evaluation::stability(&inst.id, seeds, |seed| -> Result<BTreeSet<String>> {
        let ex = explain_instance(model, train, normalizer, inst, &cfg, instance_seed(seed, &inst.id))?;
        evaluation::stability_features(&ex.rulesets, &train.schema, inst, ex.prediction, mode)
            .map_err(|e| PipelineError::for_file(Stage::Evaluate, &inst.id, e))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplainScope {
    /// Only files the model predicts defective.
    #[default]
    PredictedDefect,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub train: PathBuf,
    pub test: PathBuf,
    pub validate: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    /// Pre-trained forest; trained from `train` when absent.
    pub model: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub n_trees: usize,
    pub explain: ExplainConfig,
    pub scope: ExplainScope,
    /// Restricts explanation to these ids of the test release.
    pub files: Option<Vec<String>>,
    pub threads: Option<usize>,
    pub write_reports: bool,
}

impl RunConfig {
    pub fn new(train: impl Into<PathBuf>, test: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            train: train.into(),
            test: test.into(),
            validate: None,
            schema: None,
            model: None,
            out_dir: out_dir.into(),
            seed: 0,
            n_trees: forest::DEFAULT_N_TREES,
            explain: ExplainConfig::default(),
            scope: ExplainScope::default(),
            files: None,
            threads: None,
            write_reports: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut inputs = vec![&self.train, &self.test];
        inputs.extend(self.validate.iter());
        inputs.extend(self.schema.iter());
        inputs.extend(self.model.iter());
        for path in inputs {
            if !path.is_file() {
                return Err(PipelineError::config(format!("input file {} does not exist", path.display())));
            }
        }
        if self.n_trees == 0 {
            return Err(PipelineError::config("the forest needs at least one tree"));
        }
        if self.threads == Some(0) {
            return Err(PipelineError::config("thread count must be at least 1"));
        }
        self.explain.validate()
    }
}

/// Thread cap from the config, else from the environment, else rayon's default.
pub fn thread_count(explicit: Option<usize>) -> Result<Option<usize>> {
    if explicit.is_some() {
        return Ok(explicit);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(PipelineError::config(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
        _ => Ok(None),
    }
}

pub fn load_schema(explicit: Option<&Path>, train: &Path) -> Result<MetricSchema> {
    match explicit {
        Some(p) => MetricSchema::from_json_file(p).map_err(|e| PipelineError::new(Stage::Config, e)),
        None => MetricSchema::from_csv_header(train).map_err(|e| PipelineError::new(Stage::Load, e)),
    }
}

pub fn load_release(path: &Path, schema: &MetricSchema) -> Result<Dataset> {
    dataset::load_dataset(path, schema)
        .map_err(|e| PipelineError::for_file(Stage::Load, &path.display().to_string(), e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub n_trees: usize,
    pub train_release: String,
    pub test_release: String,
    pub validate_release: Option<String>,
    pub schema_fingerprint: String,
    pub test_auc: Option<f64>,
    pub n_test_files: usize,
    pub n_explained: usize,
    /// False when the run aborted after flushing partial results.
    pub complete: bool,
    pub artifacts: Vec<ArtifactEntry>,
}

struct ArtifactWriter {
    root: PathBuf,
    written: Vec<ArtifactEntry>,
}

impl ArtifactWriter {
    fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| PipelineError::new(Stage::Write, e))?;
        Ok(Self { root: root.to_path_buf(), written: Vec::new() })
    }

    fn record(&mut self, rel: &str) -> Result<()> {
        let data = fs::read(self.root.join(rel)).map_err(|e| PipelineError::new(Stage::Write, e))?;
        self.written.push(ArtifactEntry {
            path: rel.to_string(),
            sha256: hex_string(&Sha256::digest(&data)),
            bytes: data.len() as u64,
        });
        Ok(())
    }

    fn write(&mut self, rel: &str, contents: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| PipelineError::new(Stage::Write, e))?;
        }
        fs::write(&path, contents).map_err(|e| PipelineError::for_file(Stage::Write, rel, e))?;
        self.record(rel)
    }

    fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| PipelineError::new(Stage::Write, e))?;
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    fn write_csv(&mut self, rel: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let map = |e: csv::Error| PipelineError::for_file(Stage::Write, rel, e);
        w.write_record(header).map_err(map)?;
        for r in rows {
            w.write_record(r).map_err(map)?;
        }
        let bytes = w.into_inner().map_err(|e| PipelineError::for_file(Stage::Write, rel, e.to_string()))?;
        self.write(rel, &bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplicabilityRow {
    pub file: String,
    pub outcome: Option<ApplicabilityOutcome>,
    pub missing_in_next: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplicabilityReport {
    pub tally: ApplicabilityTally,
    pub changed_followed_pct: Option<f64>,
    pub unchanged_not_followed_pct: Option<f64>,
    pub rows: Vec<ApplicabilityRow>,
}

/// Follow-up check of every defect-predicted explanation's G4 rule against
/// the next release. `next_predictions` holds the model's label per file.
pub fn applicability_report(
    explanations: &[Explanation],
    schema: &MetricSchema,
    next: &Dataset,
    next_prediction: impl Fn(&Instance) -> Result<Label>,
) -> Result<ApplicabilityReport> {
    let mut tally = ApplicabilityTally::default();
    let mut rows = Vec::new();
    for ex in explanations.iter().filter(|e| e.prediction == Label::Defect) {
        let Some(g4) = ex.plan.hyp_contradicting.as_ref() else {
            tally.without_g4 += 1;
            continue;
        };
        let Some(inst) = next.get(&ex.instance_id) else {
            tally.missing_in_next += 1;
            rows.push(ApplicabilityRow { file: ex.instance_id.clone(), outcome: None, missing_in_next: true });
            continue;
        };
        let pred_k1 = next_prediction(inst)?;
        let outcome = evaluation::applicability(&g4.rule, schema, &ex.instance_id, Some(inst), ex.prediction, pred_k1)
            .map_err(|e| PipelineError::for_file(Stage::Evaluate, &ex.instance_id, e))?;
        tally.record(outcome);
        rows.push(ApplicabilityRow { file: ex.instance_id.clone(), outcome: Some(outcome), missing_in_next: false });
    }
    Ok(ApplicabilityReport {
        changed_followed_pct: tally.changed_followed_pct(),
        unchanged_not_followed_pct: tally.unchanged_not_followed_pct(),
        tally,
        rows,
    })
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Loaded releases plus the fitted model and normaliser.
pub struct PreparedRun {
    pub schema: MetricSchema,
    pub train: Dataset,
    pub test: Dataset,
    pub next: Option<Dataset>,
    pub model: ForestModel,
    pub normalizer: Normalizer,
}

impl PreparedRun {
    /// Files to explain: the configured ids, else every file in scope.
    pub fn targets(&self, cfg: &RunConfig) -> Result<Vec<&Instance>> {
        if let Some(ids) = &cfg.files {
            return ids
                .iter()
                .map(|id| {
                    self.test
                        .get(id)
                        .ok_or_else(|| PipelineError::config(format!("file `{id}` is not in the test release")))
                })
                .collect();
        }
        let mut out = Vec::new();
        for inst in &self.test.instances {
            let selected = match cfg.scope {
                ExplainScope::All => true,
                ExplainScope::PredictedDefect => {
                    self.model
                        .predict(&inst.features)
                        .map_err(|e| PipelineError::for_file(Stage::Predict, &inst.id, e))?
                        == Label::Defect
                }
            };
            if selected {
                out.push(inst);
            }
        }
        Ok(out)
    }
}

/// Runs `f` on a pool capped by `threads` or the environment.
pub fn with_thread_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count(threads)? {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| PipelineError::new(Stage::Config, e))?;
    pool.install(f)
}

/// Loads every release and trains the forest, or loads it from `cfg.model`.
pub fn prepare(cfg: &RunConfig) -> Result<PreparedRun> {
    let schema = load_schema(cfg.schema.as_deref(), &cfg.train)?;
    let train = load_release(&cfg.train, &schema)?;
    let test = load_release(&cfg.test, &schema)?;
    let next = cfg.validate.as_deref().map(|p| load_release(p, &schema)).transpose()?;
    let model = match &cfg.model {
        Some(path) => {
            let model = ForestModel::load(path).map_err(|e| PipelineError::new(Stage::Load, e))?;
            model.check_schema(&schema).map_err(|e| PipelineError::new(Stage::Load, e))?;
            model
        }
        None => forest::train_forest(&train, cfg.n_trees, cfg.seed).map_err(|e| PipelineError::new(Stage::Train, e))?,
    };
    let normalizer = dataset::zscore_fit(&train).map_err(|e| PipelineError::new(Stage::Train, e))?;
    Ok(PreparedRun { schema, train, test, next, model, normalizer })
}

/// Trains, explains, evaluates and writes every artifact under `cfg.out_dir`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<Manifest> {
    cfg.validate()?;
    with_thread_pool(cfg.threads, || {
        let prepared = prepare(cfg)?;
        write_artifacts(cfg, &prepared, &[])
    })
}

/// Explains and evaluates a prepared run, writing artifacts, any `extra`
/// files (relative path, contents) and the manifest. On failure the artifacts
/// produced so far and a manifest marked incomplete are still written.
pub fn write_artifacts(cfg: &RunConfig, run: &PreparedRun, extra: &[(String, Vec<u8>)]) -> Result<Manifest> {
    let targets = run.targets(cfg)?;
    let mut out = ArtifactWriter::new(&cfg.out_dir)?;
    let mut manifest = Manifest {
        seed: cfg.seed,
        n_trees: run.model.n_trees,
        train_release: run.train.release_id.clone(),
        test_release: run.test.release_id.clone(),
        validate_release: run.next.as_ref().map(|d| d.release_id.clone()),
        schema_fingerprint: run.schema.fingerprint(),
        test_auc: None,
        n_test_files: run.test.len(),
        n_explained: 0,
        complete: false,
        artifacts: Vec::new(),
    };
    let mut result = write_run(cfg, run, &targets, &mut out, &mut manifest);
    for (rel, contents) in extra {
        if let Err(e) = out.write(rel, contents) {
            result = result.and(Err(e));
        }
    }
    manifest.complete = result.is_ok();
    out.written.sort_by(|a, b| a.path.cmp(&b.path));
    manifest.artifacts = out.written.clone();
    out.write_json("manifest.json", &manifest)?;
    result.map(|_| manifest)
}

/// Stability of every target file over `runs` reruns seeded `seed, seed+1, ...`.
pub fn stability_study(
    cfg: &RunConfig,
    run: &PreparedRun,
    runs: usize,
    mode: StabilityMode,
) -> Result<Vec<StabilityReport>> {
    let seeds: Vec<u64> = (0..runs as u64).map(|r| cfg.seed.wrapping_add(r)).collect();
    run.targets(cfg)?
        .par_iter()
        .map(|inst| {
            explanation_stability(&run.model, &run.train, &run.normalizer, inst, &cfg.explain, &seeds, mode)
                .map_err(|e| PipelineError::for_file(Stage::Evaluate, &inst.id, e))
        })
        .collect()
}

fn write_run(
    cfg: &RunConfig,
    run: &PreparedRun,
    targets: &[&Instance],
    out: &mut ArtifactWriter,
    manifest: &mut Manifest,
) -> Result<()> {
    let PreparedRun { schema, train, test, next, model, normalizer } = run;
    out.write("model.json", model.to_json().as_bytes())?;

    let probabilities: Vec<f64> = test
        .instances
        .par_iter()
        .map(|i| model.predict_proba(&i.features).map_err(|e| PipelineError::for_file(Stage::Predict, &i.id, e)))
        .collect::<Result<_>>()?;
    let labelled: Vec<(f64, Label)> =
        test.instances.iter().zip(&probabilities).filter_map(|(i, &p)| i.label.map(|l| (p, l))).collect();
    let (scores, labels): (Vec<f64>, Vec<Label>) = labelled.into_iter().unzip();
    manifest.test_auc = forest::auc(&scores, &labels).ok();

    let rows: Vec<Vec<String>> = test
        .instances
        .iter()
        .zip(&probabilities)
        .map(|(i, &p)| {
            vec![
                i.id.clone(),
                fmt_f64(p),
                forest::label_for_probability(p).to_string(),
                i.label.map(|l| l.to_string()).unwrap_or_default(),
            ]
        })
        .collect();
    out.write_csv("predictions.csv", &["File", "probability", "prediction", "actual"], &rows)?;

    let results: Vec<Result<Explanation>> = targets
        .par_iter()
        .map(|inst| explain_instance(model, train, normalizer, inst, &cfg.explain, instance_seed(cfg.seed, &inst.id)))
        .collect();

    // flush everything that succeeded before surfacing the first failure
    let mut explanations = Vec::new();
    let mut first_error = None;
    for r in results {
        match r {
            Ok(ex) => explanations.push(ex),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    for ex in &explanations {
        let stem = report::artifact_stem(&ex.instance_id);
        out.write_json(&format!("plans/{stem}.json"), ex)?;
        if cfg.write_reports {
            if let Some((svg, html)) = ex.emit_report(&cfg.out_dir.join("reports"))? {
                for p in [svg, html] {
                    let rel = p.strip_prefix(&cfg.out_dir).unwrap_or(&p).to_string_lossy().replace('\\', "/");
                    out.record(&rel)?;
                }
            }
        }
    }
    manifest.n_explained = explanations.len();

    let mut summary = Vec::new();
    for ex in &explanations {
        for (t, slot) in ex.plan.filled() {
            summary.push(vec![
                ex.instance_id.clone(),
                ex.prediction.to_string(),
                fmt_f64(ex.probability),
                t.code().to_string(),
                slot.rule.to_string(),
                fmt_f64(slot.rule.coverage),
                fmt_f64(slot.rule.confidence),
                fmt_f64(slot.rule.lift),
                slot.objectives.iter().map(|o| o.to_string()).collect::<Vec<_>>().join(";"),
            ]);
        }
    }
    out.write_csv(
        "guidance_summary.csv",
        &["File", "prediction", "probability", "guidance", "rule", "coverage", "confidence", "lift", "objectives"],
        &summary,
    )?;

    let plans: Vec<GuidancePlan> = explanations.iter().map(|e| e.plan.clone()).collect();
    let quality: RuleQualitySummary =
        evaluation::rule_quality_summary(&plans, test).map_err(|e| PipelineError::new(Stage::Evaluate, e))?;
    out.write_json("rule_quality.json", &quality)?;

    if let Some(next) = next {
        let report = applicability_report(&explanations, schema, next, |inst| {
            model.predict(&inst.features).map_err(|e| PipelineError::for_file(Stage::Predict, &inst.id, e))
        })?;
        let rows: Vec<Vec<String>> = report
            .rows
            .iter()
            .map(|r| {
                let outcome = r.outcome.map_or("missing_in_next_release", |o| o.as_str());
                vec![r.file.clone(), outcome.to_string()]
            })
            .collect();
        out.write_csv("applicability.csv", &["File", "outcome"], &rows)?;
        out.write_json("applicability.json", &report)?;
    }

    match first_error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
