//! Sorting mined rules into the four guidance types and phrasing them.
//!
//! A rule's type follows from two facts about the explained file: whether the
//! antecedent holds on its actual metric values, and whether the consequent
//! agrees with the model's prediction.
//!
//! | LHS holds | consequent = prediction | type                          |
//! |-----------|-------------------------|-------------------------------|
//! | yes       | yes                     | G1 supporting (risky now)     |
//! | yes       | no                      | G2 contradicting (non-risky)  |
//! | no        | yes                     | G3 hypothetical supporting    |
//! | no        | no                      | G4 hypothetical contradicting |

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Instance, Label, MetricSchema};
use crate::metrics::{self, ValueKind};
use crate::miner::{Condition, ConditionForm, Objective, Rule, RuleSet};

#[derive(Debug, Error)]
pub enum GuidanceError {
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
}

pub type Result<T> = std::result::Result<T, GuidanceError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceType {
    Supporting,
    Contradicting,
    HypSupporting,
    HypContradicting,
}

impl GuidanceType {
    pub const ALL: [GuidanceType; 4] = [
        GuidanceType::Supporting,
        GuidanceType::Contradicting,
        GuidanceType::HypSupporting,
        GuidanceType::HypContradicting,
    ];

    pub fn code(self) -> &'static str {
        match self {
            GuidanceType::Supporting => "G1",
            GuidanceType::Contradicting => "G2",
            GuidanceType::HypSupporting => "G3",
            GuidanceType::HypContradicting => "G4",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            GuidanceType::Supporting => "risky current practices",
            GuidanceType::Contradicting => "non-risky current practices",
            GuidanceType::HypSupporting => "practices to avoid",
            GuidanceType::HypContradicting => "practices to follow",
        }
    }

    pub fn from_facts(lhs_holds: bool, consequent_matches: bool) -> GuidanceType {
        match (lhs_holds, consequent_matches) {
            (true, true) => GuidanceType::Supporting,
            (true, false) => GuidanceType::Contradicting,
            (false, true) => GuidanceType::HypSupporting,
            (false, false) => GuidanceType::HypContradicting,
        }
    }

    pub fn lhs_holds(self) -> bool {
        matches!(self, GuidanceType::Supporting | GuidanceType::Contradicting)
    }

    pub fn consequent_matches(self) -> bool {
        matches!(self, GuidanceType::Supporting | GuidanceType::HypSupporting)
    }
}

impl fmt::Display for GuidanceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Conjunction of the conditions on raw metric values. `<=`/`>` compare as
/// written, intervals include both ends.
pub fn eval_antecedent(p: &[Condition], schema: &MetricSchema, values: &[f64]) -> Result<bool> {
    for c in p {
        let i = schema.index_of(&c.feature).ok_or_else(|| GuidanceError::UnknownFeature(c.feature.clone()))?;
        if !c.holds(values[i]) {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn classify_rule(rule: &Rule, schema: &MetricSchema, inst: &Instance, prediction: Label) -> Result<GuidanceType> {
    let holds = eval_antecedent(&rule.antecedent, schema, &inst.features)?;
    Ok(GuidanceType::from_facts(holds, rule.consequent == prediction))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankCriterion {
    Confidence,
    Lift,
    Coverage,
    /// fewer conditions first
    Brevity,
}

/// Lexicographic criteria for picking one rule per guidance type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BestRuleOrder(pub Vec<RankCriterion>);

impl Default for BestRuleOrder {
    fn default() -> Self {
        Self(vec![RankCriterion::Confidence, RankCriterion::Lift, RankCriterion::Coverage, RankCriterion::Brevity])
    }
}

impl BestRuleOrder {
    fn compare(&self, a: &Rule, b: &Rule) -> std::cmp::Ordering {
        use std::cmp::Ordering::Equal;
        for c in &self.0 {
            let ord = match c {
                RankCriterion::Confidence => b.confidence.total_cmp(&a.confidence),
                RankCriterion::Lift => b.lift.total_cmp(&a.lift),
                RankCriterion::Coverage => b.coverage.total_cmp(&a.coverage),
                RankCriterion::Brevity => a.antecedent.len().cmp(&b.antecedent.len()),
            };
            if ord != Equal {
                return ord;
            }
        }
        Equal
    }
}

/// A chosen rule and the objective runs that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRule {
    pub rule: Rule,
    pub objectives: Vec<Objective>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatementKind {
    Do,
    Avoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statement {
    pub guidance: GuidanceType,
    pub kind: StatementKind,
    pub feature: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidancePlan {
    pub instance_id: String,
    pub prediction: Label,
    pub probability: f64,
    pub supporting: Option<SlotRule>,
    pub contradicting: Option<SlotRule>,
    pub hyp_supporting: Option<SlotRule>,
    pub hyp_contradicting: Option<SlotRule>,
    /// Actual values of every feature named by a slot rule.
    pub feature_values: BTreeMap<String, f64>,
    pub statements: Vec<Statement>,
    /// Set when no slot could be filled.
    pub empty: bool,
}

impl GuidancePlan {
    pub fn slot(&self, t: GuidanceType) -> Option<&SlotRule> {
        match t {
            GuidanceType::Supporting => self.supporting.as_ref(),
            GuidanceType::Contradicting => self.contradicting.as_ref(),
            GuidanceType::HypSupporting => self.hyp_supporting.as_ref(),
            GuidanceType::HypContradicting => self.hyp_contradicting.as_ref(),
        }
    }

    fn slot_mut(&mut self, t: GuidanceType) -> &mut Option<SlotRule> {
        match t {
            GuidanceType::Supporting => &mut self.supporting,
            GuidanceType::Contradicting => &mut self.contradicting,
            GuidanceType::HypSupporting => &mut self.hyp_supporting,
            GuidanceType::HypContradicting => &mut self.hyp_contradicting,
        }
    }

    pub fn filled(&self) -> impl Iterator<Item = (GuidanceType, &SlotRule)> {
        GuidanceType::ALL.into_iter().filter_map(|t| self.slot(t).map(|s| (t, s)))
    }
}

/// Pools the rules of every objective run, classifies them against the file,
/// and keeps the best rule per guidance type.
pub fn build_guidance(
    rulesets: &[RuleSet],
    schema: &MetricSchema,
    inst: &Instance,
    prediction: Label,
    probability: f64,
    order: &BestRuleOrder,
) -> Result<GuidancePlan> {
    let mut pool: Vec<SlotRule> = Vec::new();
    for set in rulesets {
        for rule in set.iter() {
            match pool.iter_mut().find(|s| s.rule.antecedent == rule.antecedent && s.rule.consequent == rule.consequent)
            {
                Some(existing) => {
                    if !existing.objectives.contains(&set.objective) {
                        existing.objectives.push(set.objective);
                    }
                }
                None => pool.push(SlotRule { rule: rule.clone(), objectives: vec![set.objective] }),
            }
        }
    }
    let mut plan = GuidancePlan {
        instance_id: inst.id.clone(),
        prediction,
        probability,
        supporting: None,
        contradicting: None,
        hyp_supporting: None,
        hyp_contradicting: None,
        feature_values: BTreeMap::new(),
        statements: Vec::new(),
        empty: true,
    };
    for candidate in pool {
        let t = classify_rule(&candidate.rule, schema, inst, prediction)?;
        let slot = plan.slot_mut(t);
        // strict improvement only, so earlier pool entries win full ties
        let better = slot.as_ref().is_none_or(|cur| order.compare(&candidate.rule, &cur.rule).is_lt());
        if better {
            *slot = Some(candidate);
        }
    }
    let mut values = BTreeMap::new();
    for (_, slot) in plan.filled() {
        for c in &slot.rule.antecedent {
            let i = schema.index_of(&c.feature).ok_or_else(|| GuidanceError::UnknownFeature(c.feature.clone()))?;
            values.insert(c.feature.clone(), inst.features[i]);
        }
    }
    plan.feature_values = values;
    let empty = plan.filled().next().is_none();
    plan.empty = empty;
    plan.statements = render_statements(&plan, schema, inst)?;
    Ok(plan)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Direction {
    Increase,
    Decrease,
}

fn fmt_bound(v: f64, kind: ValueKind, dir: Direction) -> String {
    match kind {
        ValueKind::Count => {
            let r = match dir {
                Direction::Decrease => v.ceil(),
                Direction::Increase => v.floor(),
            };
            format!("{}", r as i64)
        }
        ValueKind::Ratio => format!("{v:.2}"),
    }
}

fn phrase(feature: &str, dir: Direction, bound: f64, avoid: bool) -> String {
    let vocab = metrics::vocabulary(feature);
    let value = fmt_bound(bound, vocab.kind, dir);
    let amount = if vocab.unit.is_empty() { value } else { format!("{value} {}", vocab.unit) };
    let (verb, rel) = match dir {
        Direction::Increase => ("increasing", "more than"),
        Direction::Decrease => ("decreasing", "less than"),
    };
    if avoid {
        format!("Avoid {verb} {} to {rel} {amount} to not increase the risk of being defective", vocab.phrase)
    } else {
        let mut verb = verb.to_string();
        verb[..1].make_ascii_uppercase();
        format!("{verb} {} to {rel} {amount} to decrease the risk of being defective", vocab.phrase)
    }
}

/// Move needed to bring `x` inside the condition, if it is outside.
fn move_into(c: &Condition, x: f64) -> Option<(Direction, f64)> {
    if c.holds(x) {
        return None;
    }
    match c.form {
        ConditionForm::Le(v) => Some((Direction::Decrease, v)),
        ConditionForm::Gt(v) => Some((Direction::Increase, v)),
        ConditionForm::Between(a, b) => {
            if x < a {
                Some((Direction::Increase, a))
            } else {
                Some((Direction::Decrease, b))
            }
        }
    }
}

/// Move needed to take `x` out of the condition, if it is inside. Intervals
/// exit through the nearer end.
fn move_out(c: &Condition, x: f64) -> Option<(Direction, f64)> {
    if !c.holds(x) {
        return None;
    }
    match c.form {
        ConditionForm::Le(v) => Some((Direction::Increase, v)),
        ConditionForm::Gt(v) => Some((Direction::Decrease, v)),
        ConditionForm::Between(a, b) => {
            if x - a <= b - x {
                Some((Direction::Decrease, a))
            } else {
                Some((Direction::Increase, b))
            }
        }
    }
}

/// One sentence per actionable condition of the filled slots.
///
/// G4 conditions say what to change to enter the clean-associated region and
/// G3 conditions what change to avoid. G1 conditions are reversed into "do"
/// statements and G2 conditions into "avoid" statements. Conditions that need
/// no action on the file's actual value are omitted.
pub fn render_statements(plan: &GuidancePlan, schema: &MetricSchema, inst: &Instance) -> Result<Vec<Statement>> {
    let mut out = Vec::new();
    let order = [
        GuidanceType::HypContradicting,
        GuidanceType::Supporting,
        GuidanceType::Contradicting,
        GuidanceType::HypSupporting,
    ];
    for t in order {
        let Some(slot) = plan.slot(t) else { continue };
        for c in &slot.rule.antecedent {
            let i = schema.index_of(&c.feature).ok_or_else(|| GuidanceError::UnknownFeature(c.feature.clone()))?;
            let x = inst.features[i];
            let (movement, kind) = match t {
                GuidanceType::HypContradicting => (move_into(c, x), StatementKind::Do),
                GuidanceType::Supporting => (move_out(c, x), StatementKind::Do),
                GuidanceType::HypSupporting => (move_into(c, x), StatementKind::Avoid),
                GuidanceType::Contradicting => (move_out(c, x), StatementKind::Avoid),
            };
            if let Some((dir, bound)) = movement {
                out.push(Statement {
                    guidance: t,
                    kind,
                    feature: c.feature.clone(),
                    text: phrase(&c.feature, dir, bound, kind == StatementKind::Avoid),
                });
            }
        }
    }
    Ok(out)
}
