//! Evaluation harnesses: rule quality on the test release, explanation
//! stability, applicability of follow-up guidance in the next release, and
//! Scott-Knott ESD ranking of classifier AUC samples.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::dataset::{Dataset, Instance, Label, MetricSchema};
use crate::guidance::{self, BestRuleOrder, GuidanceError, GuidancePlan, GuidanceType};
use crate::miner::{Objective, Rule, RuleSet};

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("stability needs at least 2 runs, got {0}")]
    TooFewRuns(usize),
    #[error("run {run} failed: {source}")]
    RunFailed {
        run: usize,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error("file `{0}` was not predicted defective in release k")]
    NotPredictedDefect(String),
    #[error("file `{0}` does not exist in the next release")]
    MissingFileInNextRelease(String),
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error("cannot read samples: {0}")]
    InvalidSamples(String),
    #[error(transparent)]
    Guidance(#[from] GuidanceError),
}

pub type Result<T> = std::result::Result<T, EvaluationError>;

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

// ---------------------------------------------------------------- rule quality

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureMedians {
    pub coverage: f64,
    pub confidence: f64,
    pub lift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleQuality {
    pub instance_id: String,
    pub guidance: GuidanceType,
    pub coverage: f64,
    pub confidence: f64,
    pub lift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleQualitySummary {
    pub n_plans: usize,
    pub n_rules: usize,
    /// Labelled test rows the measures were computed on.
    pub n_test_rows: usize,
    /// Set when there was nothing to aggregate.
    pub empty: bool,
    pub pooled: Option<MeasureMedians>,
    pub per_type: BTreeMap<GuidanceType, MeasureMedians>,
    pub rules: Vec<RuleQuality>,
}

/// Coverage, confidence and lift of `rule` against actual labels of a release.
/// Unlabelled rows are skipped. A rule that covers nothing gets confidence and
/// lift 0, as does a consequent absent from the release.
pub fn test_measures(rule: &Rule, test: &Dataset) -> Result<(f64, f64, f64)> {
    let (mut n, mut n_p, mut n_q, mut n_pq) = (0usize, 0usize, 0usize, 0usize);
    for inst in &test.instances {
        let Some(label) = inst.label else { continue };
        n += 1;
        let p = guidance::eval_antecedent(&rule.antecedent, &test.schema, &inst.features)?;
        let q = label == rule.consequent;
        n_p += p as usize;
        n_q += q as usize;
        n_pq += (p && q) as usize;
    }
    if n == 0 {
        return Ok((0.0, 0.0, 0.0));
    }
    let coverage = n_p as f64 / n as f64;
    let confidence = if n_p == 0 { 0.0 } else { n_pq as f64 / n_p as f64 };
    let lift = if n_p == 0 || n_q == 0 { 0.0 } else { (n_pq * n) as f64 / (n_p * n_q) as f64 };
    Ok((coverage, confidence, lift))
}

fn medians_of(rows: &[&RuleQuality]) -> Option<MeasureMedians> {
    let pick = |f: fn(&RuleQuality) -> f64| median(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
    Some(MeasureMedians {
        coverage: pick(|r| r.coverage)?,
        confidence: pick(|r| r.confidence)?,
        lift: pick(|r| r.lift)?,
    })
}

/// Medians of the best rules' measures recomputed on the test release.
pub fn rule_quality_summary(plans: &[GuidancePlan], test: &Dataset) -> Result<RuleQualitySummary> {
    let mut rules = Vec::new();
    for plan in plans {
        for (t, slot) in plan.filled() {
            let (coverage, confidence, lift) = test_measures(&slot.rule, test)?;
            rules.push(RuleQuality { instance_id: plan.instance_id.clone(), guidance: t, coverage, confidence, lift });
        }
    }
    let all: Vec<&RuleQuality> = rules.iter().collect();
    let mut per_type = BTreeMap::new();
    for t in GuidanceType::ALL {
        let of_type: Vec<&RuleQuality> = rules.iter().filter(|r| r.guidance == t).collect();
        if let Some(m) = medians_of(&of_type) {
            per_type.insert(t, m);
        }
    }
    Ok(RuleQualitySummary {
        n_plans: plans.len(),
        n_rules: rules.len(),
        n_test_rows: test.instances.iter().filter(|i| i.label.is_some()).count(),
        empty: rules.is_empty(),
        pooled: medians_of(&all),
        per_type,
        rules,
    })
}

// ------------------------------------------------------------------ stability

/// `|X ∩ Y| / |X ∪ Y|`, with two empty sets counted as identical.
pub fn jaccard<T: Ord>(x: &BTreeSet<T>, y: &BTreeSet<T>) -> f64 {
    let union = x.union(y).count();
    if union == 0 {
        return 1.0;
    }
    x.intersection(y).count() as f64 / union as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityMode {
    /// Features of the best confidence-optimised rule in each slot.
    #[default]
    BestRules,
    /// Features of every confidence-optimised rule.
    AllRules,
}

/// Feature names a run contributes to the stability comparison. Only the
/// confidence-optimised rule sets are considered.
pub fn stability_features(
    rulesets: &[RuleSet],
    schema: &MetricSchema,
    inst: &Instance,
    prediction: Label,
    mode: StabilityMode,
) -> Result<BTreeSet<String>> {
    let confidence: Vec<RuleSet> = rulesets.iter().filter(|s| s.objective == Objective::Confidence).cloned().collect();
    let mut out = BTreeSet::new();
    match mode {
        StabilityMode::AllRules => {
            for rule in confidence.iter().flat_map(|s| s.iter()) {
                out.extend(rule.antecedent.iter().map(|c| c.feature.clone()));
            }
        }
        StabilityMode::BestRules => {
            let plan = guidance::build_guidance(&confidence, schema, inst, prediction, 0.0, &BestRuleOrder::default())?;
            for (_, slot) in plan.filled() {
                out.extend(slot.rule.antecedent.iter().map(|c| c.feature.clone()));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairJaccard {
    pub run_a: usize,
    pub run_b: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub instance_id: String,
    pub seeds: Vec<u64>,
    pub feature_sets: Vec<BTreeSet<String>>,
    pub pairs: Vec<PairJaccard>,
    pub median_jaccard: f64,
    /// Pairs where both runs produced no features.
    pub empty_pairs: usize,
}

impl StabilityReport {
    pub fn matrix(&self) -> Vec<Vec<f64>> {
        let n = self.feature_sets.len();
        let mut m = vec![vec![1.0; n]; n];
        for p in &self.pairs {
            m[p.run_a][p.run_b] = p.value;
            m[p.run_b][p.run_a] = p.value;
        }
        m
    }
}

/// Reruns an explanation once per seed and compares the feature sets pairwise.
pub fn stability<F, E>(instance_id: &str, seeds: &[u64], mut run: F) -> Result<StabilityReport>
where
    F: FnMut(u64) -> std::result::Result<BTreeSet<String>, E>,
    E: Into<Box<dyn std::error::Error + Send + Sync>>,
{
    if seeds.len() < 2 {
        return Err(EvaluationError::TooFewRuns(seeds.len()));
    }
    let mut sets = Vec::with_capacity(seeds.len());
    for (i, &seed) in seeds.iter().enumerate() {
        sets.push(run(seed).map_err(|e| EvaluationError::RunFailed { run: i, source: e.into() })?);
    }
    let mut pairs = Vec::new();
    let mut empty_pairs = 0;
    for a in 0..sets.len() {
        for b in a + 1..sets.len() {
            if sets[a].is_empty() && sets[b].is_empty() {
                empty_pairs += 1;
            }
            pairs.push(PairJaccard { run_a: a, run_b: b, value: jaccard(&sets[a], &sets[b]) });
        }
    }
    let values: Vec<f64> = pairs.iter().map(|p| p.value).collect();
    Ok(StabilityReport {
        instance_id: instance_id.to_string(),
        seeds: seeds.to_vec(),
        feature_sets: sets,
        median_jaccard: median(&values).unwrap_or(1.0),
        pairs,
        empty_pairs,
    })
}

// -------------------------------------------------------------- applicability

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApplicabilityOutcome {
    ChangedAndFollowed,
    ChangedNotFollowed,
    UnchangedNotFollowed,
    UnchangedButFollowed,
}

impl ApplicabilityOutcome {
    pub fn from_facts(changed: bool, followed: bool) -> Self {
        match (changed, followed) {
            (true, true) => ApplicabilityOutcome::ChangedAndFollowed,
            (true, false) => ApplicabilityOutcome::ChangedNotFollowed,
            (false, false) => ApplicabilityOutcome::UnchangedNotFollowed,
            (false, true) => ApplicabilityOutcome::UnchangedButFollowed,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ApplicabilityOutcome::ChangedAndFollowed => "changed_and_followed",
            ApplicabilityOutcome::ChangedNotFollowed => "changed_not_followed",
            ApplicabilityOutcome::UnchangedNotFollowed => "unchanged_not_followed",
            ApplicabilityOutcome::UnchangedButFollowed => "unchanged_but_followed",
        }
    }
}

/// Whether a file predicted defective at release k followed its G4 rule at
/// k+1, crossed with whether its prediction flipped to clean.
pub fn applicability(
    g4_rule: &Rule,
    schema: &MetricSchema,
    id: &str,
    next: Option<&Instance>,
    pred_k: Label,
    pred_k1: Label,
) -> Result<ApplicabilityOutcome> {
    if pred_k != Label::Defect {
        return Err(EvaluationError::NotPredictedDefect(id.to_string()));
    }
    let next = next.ok_or_else(|| EvaluationError::MissingFileInNextRelease(id.to_string()))?;
    let followed = guidance::eval_antecedent(&g4_rule.antecedent, schema, &next.features)?;
    Ok(ApplicabilityOutcome::from_facts(pred_k1 == Label::Clean, followed))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApplicabilityTally {
    pub changed_and_followed: usize,
    pub changed_not_followed: usize,
    pub unchanged_not_followed: usize,
    pub unchanged_but_followed: usize,
    /// Files gone from the next release, excluded from the cells.
    pub missing_in_next: usize,
    /// Defect-predicted files whose plan had no G4 rule.
    pub without_g4: usize,
}

impl ApplicabilityTally {
    pub fn record(&mut self, outcome: ApplicabilityOutcome) {
        match outcome {
            ApplicabilityOutcome::ChangedAndFollowed => self.changed_and_followed += 1,
            ApplicabilityOutcome::ChangedNotFollowed => self.changed_not_followed += 1,
            ApplicabilityOutcome::UnchangedNotFollowed => self.unchanged_not_followed += 1,
            ApplicabilityOutcome::UnchangedButFollowed => self.unchanged_but_followed += 1,
        }
    }

    pub fn evaluated(&self) -> usize {
        self.changed_and_followed
            + self.changed_not_followed
            + self.unchanged_not_followed
            + self.unchanged_but_followed
    }

    /// Share of files whose prediction flipped that had followed the rule.
    pub fn changed_followed_pct(&self) -> Option<f64> {
        let d = self.changed_and_followed + self.changed_not_followed;
        (d > 0).then(|| 100.0 * self.changed_and_followed as f64 / d as f64)
    }

    /// Share of files whose prediction stayed defective that had not followed it.
    pub fn unchanged_not_followed_pct(&self) -> Option<f64> {
        let d = self.unchanged_not_followed + self.unchanged_but_followed;
        (d > 0).then(|| 100.0 * self.unchanged_not_followed as f64 / d as f64)
    }
}

// ---------------------------------------------------------------- Scott-Knott

pub const NEGLIGIBLE_DELTA: f64 = 0.147;
pub const KRUSKAL_ALPHA: f64 = 0.05;

/// `(#{a > b} - #{a < b}) / (|A| |B|)` over all pairs.
pub fn cliffs_delta(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut sorted_b = b.to_vec();
    sorted_b.sort_by(f64::total_cmp);
    let mut score: i64 = 0;
    for &x in a {
        let below = sorted_b.partition_point(|&y| y < x) as i64;
        let not_above = sorted_b.partition_point(|&y| y <= x) as i64;
        let above = sorted_b.len() as i64 - not_above;
        score += below - above;
    }
    score as f64 / (a.len() * b.len()) as f64
}

/// Tie-corrected Kruskal-Wallis H over any number of groups.
pub fn kruskal_wallis(groups: &[&[f64]]) -> f64 {
    let mut pooled: Vec<(f64, usize)> =
        groups.iter().enumerate().flat_map(|(g, xs)| xs.iter().map(move |&x| (x, g))).collect();
    let n = pooled.len();
    if n < 2 {
        return 0.0;
    }
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sums = vec![0.0; groups.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for item in &pooled[i..=j] {
            rank_sums[item.1] += mid;
        }
        let t = (j - i + 1) as f64;
        ties += t * t * t - t;
        i = j + 1;
    }
    let nf = n as f64;
    let correction = 1.0 - ties / (nf * nf * nf - nf);
    if correction <= 0.0 {
        return 0.0;
    }
    let sum: f64 =
        groups.iter().zip(&rank_sums).filter(|(g, _)| !g.is_empty()).map(|(g, r)| r * r / g.len() as f64).sum();
    (12.0 / (nf * (nf + 1.0)) * sum - 3.0 * (nf + 1.0)) / correction
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkGroup {
    /// 1 is best.
    pub rank: usize,
    pub techniques: Vec<String>,
    /// Median of the members' medians.
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkGroups {
    pub groups: Vec<SkGroup>,
}

impl SkGroups {
    pub fn rank_of(&self, technique: &str) -> Option<usize> {
        self.groups.iter().find(|g| g.techniques.iter().any(|t| t == technique)).map(|g| g.rank)
    }
}

/// Reads a `technique,auc` CSV (header required) into per-technique samples.
pub fn read_auc_samples<R: std::io::Read>(reader: R) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let bad = |e: csv::Error| EvaluationError::InvalidSamples(e.to_string());
    let headers = rdr.headers().map_err(bad)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| EvaluationError::InvalidSamples(format!("missing `{name}` column")))
    };
    let (tc, ac) = (col("technique")?, col("auc")?);
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(bad)?;
        let raw = rec.get(ac).unwrap_or("");
        let auc: f64 = raw
            .parse()
            .map_err(|_| EvaluationError::InvalidSamples(format!("row {}: `{raw}` is not a number", i + 1)))?;
        out.entry(rec.get(tc).unwrap_or("").to_string()).or_default().push(auc);
    }
    Ok(out)
}

struct Technique<'a> {
    name: &'a str,
    median: f64,
    mean: f64,
    sorted: Vec<f64>,
}

/// Ranks techniques into statistically distinct groups by recursive binary
/// splitting of the median-ordered list. A split is kept when Kruskal-Wallis
/// is significant and Cliff's delta is non-negligible. Techniques with
/// identical samples are never separated.
pub fn scott_knott_esd(samples: &BTreeMap<String, Vec<f64>>) -> Result<SkGroups> {
    if samples.is_empty() {
        return Err(EvaluationError::InsufficientSamples("no techniques".into()));
    }
    let mut techs = Vec::with_capacity(samples.len());
    for (name, xs) in samples {
        if xs.len() < 2 {
            return Err(EvaluationError::InsufficientSamples(format!("`{name}` has {} sample(s)", xs.len())));
        }
        if xs.iter().any(|x| !x.is_finite()) {
            return Err(EvaluationError::InsufficientSamples(format!("`{name}` has a non-finite sample")));
        }
        let mut sorted = xs.clone();
        sorted.sort_by(f64::total_cmp);
        techs.push(Technique { name, median: median(xs).unwrap(), mean: mean(xs), sorted });
    }
    techs.sort_by(|a, b| {
        b.median
            .total_cmp(&a.median)
            .then(b.mean.total_cmp(&a.mean))
            .then_with(|| cmp_samples(&b.sorted, &a.sorted))
            .then_with(|| a.name.cmp(b.name))
    });
    let chi2 = ChiSquared::new(1.0).expect("df 1");
    let mut blocks = Vec::new();
    split(&techs, &chi2, &mut blocks);
    let groups = blocks
        .into_iter()
        .enumerate()
        .map(|(i, block)| SkGroup {
            rank: i + 1,
            techniques: block.iter().map(|t| t.name.to_string()).collect(),
            median: median(&block.iter().map(|t| t.median).collect::<Vec<_>>()).unwrap(),
        })
        .collect();
    Ok(SkGroups { groups })
}

fn cmp_samples(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => {}
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

fn pooled(techs: &[Technique<'_>]) -> Vec<f64> {
    techs.iter().flat_map(|t| t.sorted.iter().copied()).collect()
}

fn split<'a, 'b>(techs: &'b [Technique<'a>], chi2: &ChiSquared, out: &mut Vec<&'b [Technique<'a>]>) {
    let mut best: Option<(usize, f64)> = None;
    for cut in 1..techs.len() {
        if techs[cut - 1].sorted == techs[cut].sorted {
            continue;
        }
        let (l, r) = (pooled(&techs[..cut]), pooled(&techs[cut..]));
        let h = kruskal_wallis(&[&l, &r]);
        if best.is_none_or(|(_, bh)| h > bh) {
            best = Some((cut, h));
        }
    }
    if let Some((cut, h)) = best {
        let p = 1.0 - chi2.cdf(h.max(0.0));
        let delta = cliffs_delta(&pooled(&techs[..cut]), &pooled(&techs[cut..]));
        if p <= KRUSKAL_ALPHA && delta.abs() >= NEGLIGIBLE_DELTA {
            split(&techs[..cut], chi2, out);
            split(&techs[cut..], chi2, out);
            return;
        }
    }
    out.push(techs);
}
