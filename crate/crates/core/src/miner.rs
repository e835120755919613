//! k-optimal association rule mining over a local labelled set.
//!
//! Features are discretised into threshold and interval conditions, then an
//! OPUS-style branch-and-bound search finds, for each consequent class, the
//! `k` best antecedents under one objective (coverage, confidence or lift).
//!
//! A rule qualifies when its coverage reaches `min_coverage`, its one-sided
//! Fisher exact p-value is at most `alpha`, and no non-empty strict subset of
//! its antecedent scores at least as well on the objective. Results are ordered
//! by objective, confidence, coverage (all descending), antecedent length, and
//! finally catalogue order of the conditions, which makes the order total.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Label;
use crate::synthesis::LocalLabeledSet;

#[derive(Debug, Error)]
pub enum MinerError {
    #[error("local set is empty")]
    EmptyLocalSet,
    #[error("local set predictions contain a single class")]
    SingleClassLocalSet,
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("invalid miner config: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, MinerError>;

/// p-values within this relative distance above `alpha` still count as
/// significant; it absorbs log-factorial rounding at the boundary.
pub const P_VALUE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConditionForm {
    /// `f <= v`
    Le(f64),
    /// `f > v`
    Gt(f64),
    /// `a <= f <= b`
    Between(f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub feature: String,
    pub form: ConditionForm,
}

impl Condition {
    pub fn le(feature: &str, v: f64) -> Self {
        Self { feature: feature.to_string(), form: ConditionForm::Le(v) }
    }

    pub fn gt(feature: &str, v: f64) -> Self {
        Self { feature: feature.to_string(), form: ConditionForm::Gt(v) }
    }

    pub fn between(feature: &str, a: f64, b: f64) -> Self {
        Self { feature: feature.to_string(), form: ConditionForm::Between(a, b) }
    }

    pub fn holds(&self, value: f64) -> bool {
        match self.form {
            ConditionForm::Le(v) => value <= v,
            ConditionForm::Gt(v) => value > v,
            ConditionForm::Between(a, b) => a <= value && value <= b,
        }
    }

    pub fn op(&self) -> &'static str {
        match self.form {
            ConditionForm::Le(_) => "le",
            ConditionForm::Gt(_) => "gt",
            ConditionForm::Between(..) => "between",
        }
    }

    pub fn bounds(&self) -> Vec<f64> {
        match self.form {
            ConditionForm::Le(v) | ConditionForm::Gt(v) => vec![v],
            ConditionForm::Between(a, b) => vec![a, b],
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.form {
            ConditionForm::Le(v) => write!(f, "{} <= {v}", self.feature),
            ConditionForm::Gt(v) => write!(f, "{} > {v}", self.feature),
            ConditionForm::Between(a, b) => write!(f, "{a} <= {} <= {b}", self.feature),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ConditionRepr {
    feature: String,
    op: String,
    bounds: Vec<f64>,
}

impl Serialize for Condition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ConditionRepr { feature: self.feature.clone(), op: self.op().to_string(), bounds: self.bounds() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Condition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let repr = ConditionRepr::deserialize(d)?;
        let form = match (repr.op.as_str(), repr.bounds.as_slice()) {
            ("le", [v]) => ConditionForm::Le(*v),
            ("gt", [v]) => ConditionForm::Gt(*v),
            ("between", [a, b]) if a < b => ConditionForm::Between(*a, *b),
            (op, bounds) => return Err(D::Error::custom(format!("bad condition {op} {bounds:?}"))),
        };
        Ok(Condition { feature: repr.feature, form })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Coverage,
    Confidence,
    Lift,
}

impl Objective {
    pub const ALL: [Objective; 3] = [Objective::Coverage, Objective::Confidence, Objective::Lift];

    pub fn value(self, m: &Measures) -> f64 {
        match self {
            Objective::Coverage => m.coverage,
            Objective::Confidence => m.confidence,
            Objective::Lift => m.lift,
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Coverage => "coverage",
            Objective::Confidence => "confidence",
            Objective::Lift => "lift",
        })
    }
}

impl std::str::FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "coverage" => Ok(Objective::Coverage),
            "confidence" => Ok(Objective::Confidence),
            "lift" => Ok(Objective::Lift),
            other => Err(format!("unknown objective `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measures {
    pub coverage: f64,
    pub confidence: f64,
    pub lift: f64,
}

/// Row counts of one rule on one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Counts {
    pub n: usize,
    /// rows satisfying the antecedent
    pub n_p: usize,
    /// rows of the consequent class
    pub n_q: usize,
    pub n_pq: usize,
}

impl Counts {
    /// Degenerate supports give 0 by contract.
    pub fn measures(&self) -> Measures {
        let (n, n_p, n_q, n_pq) = (self.n as f64, self.n_p as f64, self.n_q as f64, self.n_pq as f64);
        let coverage = if self.n == 0 { 0.0 } else { n_p / n };
        let confidence = if self.n_p == 0 { 0.0 } else { n_pq / n_p };
        let lift = if self.n_p == 0 || self.n_q == 0 { 0.0 } else { (n_pq * n) / (n_p * n_q) };
        Measures { coverage, confidence, lift }
    }

    /// Cells of the 2x2 table `(p, not p) x (q, not q)`.
    pub fn table(&self) -> [usize; 4] {
        let a = self.n_pq;
        let b = self.n_p - self.n_pq;
        let c = self.n_q - self.n_pq;
        let d = self.n - self.n_p - c;
        [a, b, c, d]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub antecedent: Vec<Condition>,
    pub consequent: Label,
    pub coverage: f64,
    pub confidence: f64,
    pub lift: f64,
    pub fisher_p: f64,
}

impl Rule {
    pub fn measures(&self) -> Measures {
        Measures { coverage: self.coverage, confidence: self.confidence, lift: self.lift }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lhs: Vec<String> = self.antecedent.iter().map(ToString::to_string).collect();
        write!(f, "{{{}}} => {}", lhs.join(" & "), self.consequent)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CatalogEntry {
    pub feature_index: usize,
    pub condition: Condition,
}

/// Candidate conditions; their index order is the lexicographic tie-break.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConditionCatalog {
    pub entries: Vec<CatalogEntry>,
}

impl ConditionCatalog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn for_feature(&self, feature_index: usize) -> impl Iterator<Item = &Condition> {
        self.entries.iter().filter(move |e| e.feature_index == feature_index).map(|e| &e.condition)
    }

    /// Catalogue from explicit conditions, resolved against `feature_names`.
    pub fn from_conditions(conditions: Vec<Condition>, feature_names: &[String]) -> Result<Self> {
        let entries = conditions
            .into_iter()
            .map(|condition| {
                let feature_index = feature_index(feature_names, &condition.feature)?;
                Ok(CatalogEntry { feature_index, condition })
            })
            .collect::<Result<_>>()?;
        Ok(Self { entries })
    }
}

fn feature_index(names: &[String], feature: &str) -> Result<usize> {
    names.iter().position(|n| n == feature).ok_or_else(|| MinerError::UnknownFeature(feature.to_string()))
}

/// Equal-frequency cut points of one column: for `j in 1..bins`, the value at
/// sorted position `ceil(j * n / bins) - 1`, deduplicated, excluding the maximum.
pub fn quantile_thresholds(values: &[f64], bins: usize) -> Vec<f64> {
    if values.is_empty() || bins < 2 {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let max = sorted[n - 1];
    let mut out: Vec<f64> = Vec::new();
    for j in 1..bins {
        let pos = (j * n).div_ceil(bins);
        let v = sorted[pos.max(1) - 1];
        if v < max && out.last() != Some(&v) {
            out.push(v);
        }
    }
    out
}

/// Per feature: `f <= v` and `f > v` for every cut point, then every
/// interval `[v_i, v_j]` with `i < j`.
pub fn discretize(local: &LocalLabeledSet, bins: usize) -> Result<ConditionCatalog> {
    if local.is_empty() {
        return Err(MinerError::EmptyLocalSet);
    }
    let mut entries = Vec::new();
    let mut column = Vec::with_capacity(local.len());
    for (fi, name) in local.feature_names.iter().enumerate() {
        column.clear();
        column.extend(local.rows.iter().map(|r| r[fi]));
        let cuts = quantile_thresholds(&column, bins);
        let mut push = |condition| entries.push(CatalogEntry { feature_index: fi, condition });
        for &v in &cuts {
            push(Condition::le(name, v));
        }
        for &v in &cuts {
            push(Condition::gt(name, v));
        }
        for i in 0..cuts.len() {
            for j in i + 1..cuts.len() {
                push(Condition::between(name, cuts[i], cuts[j]));
            }
        }
    }
    Ok(ConditionCatalog { entries })
}

/// Counts of `p => q` on `data`, evaluating every row directly.
pub fn rule_counts(p: &[Condition], q: Label, data: &LocalLabeledSet) -> Result<Counts> {
    let idx = p.iter().map(|c| feature_index(&data.feature_names, &c.feature)).collect::<Result<Vec<_>>>()?;
    let mut counts = Counts { n: data.len(), n_p: 0, n_q: 0, n_pq: 0 };
    for (row, &label) in data.rows.iter().zip(&data.predictions) {
        let holds = p.iter().zip(&idx).all(|(c, &i)| c.holds(row[i]));
        let is_q = label == q;
        counts.n_q += is_q as usize;
        counts.n_p += holds as usize;
        counts.n_pq += (holds && is_q) as usize;
    }
    Ok(counts)
}

/// Coverage, confidence and lift of `p => q` on `data`.
pub fn rule_measures(p: &[Condition], q: Label, data: &LocalLabeledSet) -> Result<Measures> {
    Ok(rule_counts(p, q, data)?.measures())
}

/// Cumulative `ln(k!)` table.
#[derive(Debug, Clone)]
pub struct LnFactorials(Vec<f64>);

impl LnFactorials {
    pub fn new(max: usize) -> Self {
        let mut table = Vec::with_capacity(max + 1);
        table.push(0.0);
        let mut acc = 0.0;
        for k in 1..=max {
            acc += (k as f64).ln();
            table.push(acc);
        }
        Self(table)
    }

    fn ln_choose(&self, n: usize, k: usize) -> f64 {
        self.0[n] - self.0[k] - self.0[n - k]
    }

    /// One-sided p-value `P(X >= a)` for the table `[[a, b], [c, d]]` under
    /// the hypergeometric null with fixed margins.
    pub fn fisher_greater(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        let n = a + b + c + d;
        let row = a + b;
        let col = a + c;
        if a == 0 || n == 0 {
            return 1.0;
        }
        let lo = row.saturating_sub(n - col);
        if a <= lo {
            return 1.0;
        }
        let hi = row.min(col);
        let denom = self.ln_choose(n, row);
        let mut p = 0.0;
        for x in a..=hi {
            p += (self.ln_choose(col, x) + self.ln_choose(n - col, row - x) - denom).exp();
        }
        p.min(1.0)
    }
}

/// One-tailed Fisher exact test for positive association in `[[a, b], [c, d]]`.
pub fn fisher_exact(a: usize, b: usize, c: usize, d: usize) -> f64 {
    LnFactorials::new(a + b + c + d).fisher_greater(a, b, c, d)
}

pub fn is_significant(p: f64, alpha: f64) -> bool {
    p <= alpha * (1.0 + P_VALUE_SLACK)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinerConfig {
    pub k: usize,
    pub max_len: usize,
    pub min_coverage: f64,
    pub objective: Objective,
    pub alpha: f64,
    pub bins: usize,
}

impl Default for MinerConfig {
    fn default() -> Self {
        Self { k: 10, max_len: 3, min_coverage: 0.05, objective: Objective::Confidence, alpha: 0.05, bins: 8 }
    }
}

impl MinerConfig {
    pub fn with_objective(&self, objective: Objective) -> Self {
        Self { objective, ..self.clone() }
    }
}

/// Mined rules of one objective, split by consequent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    pub objective: Objective,
    pub defect: Vec<Rule>,
    pub clean: Vec<Rule>,
    pub no_rules_found: bool,
}

impl RuleSet {
    pub fn for_class(&self, q: Label) -> &[Rule] {
        match q {
            Label::Defect => &self.defect,
            Label::Clean => &self.clean,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Rule> {
        self.defect.iter().chain(&self.clean)
    }
}

/// Total ranking order used for the top-k lists: objective, confidence and
/// coverage descending, then shorter antecedents, then catalogue order.
pub fn compare_ranked(objective: Objective, a: (&Measures, &[usize]), b: (&Measures, &[usize])) -> Ordering {
    let (ma, ia) = a;
    let (mb, ib) = b;
    objective
        .value(mb)
        .total_cmp(&objective.value(ma))
        .then(mb.confidence.total_cmp(&ma.confidence))
        .then(mb.coverage.total_cmp(&ma.coverage))
        .then(ia.len().cmp(&ib.len()))
        .then_with(|| ia.cmp(ib))
}

#[derive(Clone)]
struct RowMask(Vec<u64>);

impl RowMask {
    fn from_fn(n: usize, f: impl Fn(usize) -> bool) -> Self {
        let mut words = vec![0u64; n.div_ceil(64)];
        for i in 0..n {
            if f(i) {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        RowMask(words)
    }

    fn count(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }

    fn and(&self, other: &RowMask) -> RowMask {
        RowMask(self.0.iter().zip(&other.0).map(|(a, b)| a & b).collect())
    }

    fn and_count(&self, other: &RowMask) -> usize {
        self.0.iter().zip(&other.0).map(|(a, b)| (a & b).count_ones() as usize).sum()
    }
}

struct Ranked {
    items: Vec<usize>,
    measures: Measures,
    fisher_p: f64,
}

/// Optimistic key for a node and everything below it.
struct Bound {
    objective: f64,
    confidence: f64,
    coverage: f64,
    len: usize,
}

struct Search<'a> {
    cfg: &'a MinerConfig,
    masks: &'a [RowMask],
    feature_of: &'a [usize],
    class_mask: RowMask,
    all_rows: RowMask,
    n: usize,
    n_q: usize,
    /// smallest antecedent count meeting `min_coverage`
    min_count: usize,
    ln_fact: &'a LnFactorials,
    top: Vec<Ranked>,
}

impl Search<'_> {
    fn counts_of(&self, n_p: usize, n_pq: usize) -> Counts {
        Counts { n: self.n, n_p, n_q: self.n_q, n_pq }
    }

    fn covers_enough(&self, n_p: usize) -> bool {
        self.counts_of(n_p, 0).measures().coverage >= self.cfg.min_coverage
    }

    fn objective(&self, m: &Measures) -> f64 {
        self.cfg.objective.value(m)
    }

    /// Upper bounds over every strict specialisation of a node.
    fn descendant_bound(&self, counts: &Counts, len: usize) -> Bound {
        // best case keeps every class-q row and only as many others as the
        // coverage floor forces
        let n_p = counts.n_pq.max(self.min_count).max(1);
        let best = self.counts_of(n_p, counts.n_pq).measures();
        match self.cfg.objective {
            // same coverage means the same rows, hence the same confidence
            Objective::Coverage => {
                let m = counts.measures();
                Bound { objective: m.coverage, confidence: m.confidence, coverage: m.coverage, len: len + 1 }
            }
            // matching the best confidence pins the antecedent count, so the
            // coverage of any tie is at most `n_p / n`
            Objective::Confidence => {
                Bound { objective: best.confidence, confidence: best.confidence, coverage: best.coverage, len: len + 1 }
            }
            Objective::Lift => {
                Bound { objective: best.lift, confidence: best.confidence, coverage: best.coverage, len: len + 1 }
            }
        }
    }

    fn kth(&self) -> Option<&Ranked> {
        (self.top.len() >= self.cfg.k).then(|| self.top.last()).flatten()
    }

    fn descendants_may_enter(&self, counts: &Counts, len: usize) -> bool {
        if len >= self.cfg.max_len || counts.n_pq == 0 {
            return false;
        }
        let bound = self.descendant_bound(counts, len);
        // every specialisation is redundant against this node
        if self.objective(&counts.measures()) >= bound.objective {
            return false;
        }
        let Some(kth) = self.kth() else { return true };
        let ko = self.objective(&kth.measures);
        let order = bound
            .objective
            .total_cmp(&ko)
            .then(bound.confidence.total_cmp(&kth.measures.confidence))
            .then(bound.coverage.total_cmp(&kth.measures.coverage))
            .then(kth.items.len().cmp(&bound.len));
        order != Ordering::Less
    }

    fn subset_counts(&self, items: &[usize], keep: u32) -> Counts {
        let mut mask = self.all_rows.clone();
        for (bit, &it) in items.iter().enumerate() {
            if keep & (1 << bit) != 0 {
                mask = mask.and(&self.masks[it]);
            }
        }
        self.counts_of(mask.count(), mask.and_count(&self.class_mask))
    }

    /// Order of a candidate against the k-th best on everything but
    /// catalogue indices; `None` while the list is not full.
    fn key_vs_kth(&self, m: &Measures, len: usize) -> Option<Ordering> {
        let kth = self.kth()?;
        Some(
            self.objective(&kth.measures)
                .total_cmp(&self.objective(m))
                .then(kth.measures.confidence.total_cmp(&m.confidence))
                .then(kth.measures.coverage.total_cmp(&m.coverage))
                .then(len.cmp(&kth.items.len())),
        )
    }

    fn consider(&mut self, prefix: &[usize], item: usize, counts: Counts) {
        let measures = counts.measures();
        if measures.coverage < self.cfg.min_coverage {
            return;
        }
        let len = prefix.len() + 1;
        let key = self.key_vs_kth(&measures, len);
        if key == Some(Ordering::Greater) {
            return;
        }
        let mut items = prefix.to_vec();
        items.push(item);
        items.sort_unstable();
        if key == Some(Ordering::Equal) {
            let kth = self.kth().expect("full list");
            if items >= kth.items {
                return;
            }
        }
        let [a, b, c, d] = counts.table();
        let fisher_p = self.ln_fact.fisher_greater(a, b, c, d);
        if !is_significant(fisher_p, self.cfg.alpha) {
            return;
        }
        let value = self.objective(&measures);
        let full = (1u32 << items.len()) - 1;
        for keep in 1..full {
            let sub = self.subset_counts(&items, keep).measures();
            if self.objective(&sub) >= value {
                return;
            }
        }
        let objective = self.cfg.objective;
        let pos = self.top.partition_point(|r| {
            compare_ranked(objective, (&r.measures, &r.items), (&measures, &items)) == Ordering::Less
        });
        self.top.insert(pos, Ranked { items, measures, fisher_p });
        self.top.truncate(self.cfg.k);
    }

    fn expand(&mut self, prefix: &mut Vec<usize>, prefix_mask: &RowMask, prefix_pq: usize, candidates: &[usize]) {
        let mut viable: Vec<(usize, RowMask, Counts)> = Vec::new();
        let prefix_q = prefix_mask.and(&self.class_mask);
        let len = prefix.len() + 1;
        let leaf = len >= self.cfg.max_len;
        for &item in candidates {
            let n_p = prefix_mask.and_count(&self.masks[item]);
            if !self.covers_enough(n_p) {
                continue;
            }
            if leaf {
                // the key only grows with n_pq, so try its largest possible value
                let best = self.counts_of(n_p, n_p.min(prefix_pq)).measures();
                if self.key_vs_kth(&best, len) == Some(Ordering::Greater) {
                    continue;
                }
            }
            let n_pq = prefix_q.and_count(&self.masks[item]);
            let counts = self.counts_of(n_p, n_pq);
            self.consider(prefix, item, counts);
            if !leaf && self.descendants_may_enter(&counts, len) {
                viable.push((item, prefix_mask.and(&self.masks[item]), counts));
            }
        }
        // ascending optimistic value; expand the most promising first with
        // every weaker item as its extension pool
        viable.sort_by(|x, y| {
            let bx = self.descendant_bound(&x.2, 0);
            let by = self.descendant_bound(&y.2, 0);
            bx.objective
                .total_cmp(&by.objective)
                .then(bx.confidence.total_cmp(&by.confidence))
                .then(bx.coverage.total_cmp(&by.coverage))
                .then(y.0.cmp(&x.0))
        });
        for i in (0..viable.len()).rev() {
            let (item, ref mask, counts) = viable[i];
            if !self.descendants_may_enter(&counts, prefix.len() + 1) {
                continue;
            }
            let feature = self.feature_of[item];
            // anything built from a weaker sibling descends from prefix + sibling,
            // so that sibling's bound still applies with the current k-th best
            let pool: Vec<usize> = viable[..i]
                .iter()
                .filter(|v| self.feature_of[v.0] != feature && self.descendants_may_enter(&v.2, prefix.len() + 1))
                .map(|v| v.0)
                .collect();
            if pool.is_empty() {
                continue;
            }
            let mask = mask.clone();
            prefix.push(item);
            self.expand(prefix, &mask, counts.n_pq, &pool);
            prefix.pop();
        }
    }
}

/// Top-k rules per consequent class under `cfg.objective`.
pub fn mine_k_optimal(local: &LocalLabeledSet, catalog: &ConditionCatalog, cfg: &MinerConfig) -> Result<RuleSet> {
    if local.is_empty() {
        return Err(MinerError::EmptyLocalSet);
    }
    if cfg.k == 0 || cfg.max_len == 0 {
        return Err(MinerError::InvalidConfig("k and max_len must be positive".into()));
    }
    if cfg.max_len > 16 {
        return Err(MinerError::InvalidConfig("max_len above 16 is not supported".into()));
    }
    if local.count_label(Label::Defect) == 0 || local.count_label(Label::Clean) == 0 {
        return Err(MinerError::SingleClassLocalSet);
    }
    let n = local.len();
    let masks: Vec<RowMask> = catalog
        .entries
        .iter()
        .map(|e| RowMask::from_fn(n, |i| e.condition.holds(local.rows[i][e.feature_index])))
        .collect();
    let feature_of: Vec<usize> = catalog.entries.iter().map(|e| e.feature_index).collect();
    let ln_fact = LnFactorials::new(n);
    let all_rows = RowMask::from_fn(n, |_| true);

    let mut per_class = Vec::with_capacity(2);
    for q in Label::BOTH {
        let class_mask = RowMask::from_fn(n, |i| local.predictions[i] == q);
        let n_q = class_mask.count();
        let mut search = Search {
            cfg,
            masks: &masks,
            feature_of: &feature_of,
            class_mask,
            all_rows: all_rows.clone(),
            n,
            n_q,
            min_count: 0,
            ln_fact: &ln_fact,
            top: Vec::new(),
        };
        search.min_count = (0..=n).find(|&c| search.covers_enough(c)).unwrap_or(n + 1);
        let candidates: Vec<usize> = (0..catalog.len()).collect();
        search.expand(&mut Vec::new(), &all_rows, n_q, &candidates);
        let rules = search
            .top
            .into_iter()
            .map(|r| Rule {
                antecedent: r.items.iter().map(|&i| catalog.entries[i].condition.clone()).collect(),
                consequent: q,
                coverage: r.measures.coverage,
                confidence: r.measures.confidence,
                lift: r.measures.lift,
                fisher_p: r.fisher_p,
            })
            .collect::<Vec<_>>();
        per_class.push(rules);
    }
    let clean = per_class.pop().unwrap_or_default();
    let defect = per_class.pop().unwrap_or_default();
    let no_rules_found = defect.is_empty() && clean.is_empty();
    Ok(RuleSet { objective: cfg.objective, defect, clean, no_rules_found })
}

/// Mines every requested objective. Within one consequent class lift is
/// confidence times the constant `n / n_q`, so both objectives rank every
/// candidate identically; the lift lists reuse the confidence search.
pub fn mine_objectives(
    local: &LocalLabeledSet,
    catalog: &ConditionCatalog,
    cfg: &MinerConfig,
    objectives: &[Objective],
) -> Result<Vec<RuleSet>> {
    let mut done: Vec<RuleSet> = Vec::with_capacity(objectives.len());
    for &objective in objectives {
        let twin = match objective {
            Objective::Confidence => Some(Objective::Lift),
            Objective::Lift => Some(Objective::Confidence),
            Objective::Coverage => None,
        };
        let reused = twin.and_then(|t| done.iter().find(|s| s.objective == t)).cloned();
        let set = match reused {
            Some(set) => RuleSet { objective, ..set },
            None => mine_k_optimal(local, catalog, &cfg.with_objective(objective))?,
        };
        done.push(set);
    }
    Ok(done)
}
