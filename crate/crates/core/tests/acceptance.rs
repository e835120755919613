//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero when any criterion fails.

mod support;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use defect_guidance::dataset::{zscore_fit, Dataset, FeatureRange, Instance, Label, MetricSchema};
use defect_guidance::evaluation::{self, cliffs_delta, scott_knott_esd, ApplicabilityOutcome, StabilityMode};
use defect_guidance::forest::{auc, train_forest};
use defect_guidance::guidance::{build_guidance, classify_rule, BestRuleOrder, GuidanceType};
use defect_guidance::miner::{
    compare_ranked, discretize, fisher_exact, is_significant, mine_k_optimal, rule_counts, Condition, ConditionCatalog,
    Counts, Measures, MinerConfig, Objective, Rule, RuleSet,
};
use defect_guidance::neighborhood::{neighborhood_threshold, select_neighborhood, NeighborhoodConfig};
use defect_guidance::pipeline::{
    applicability_report, explain_instance, instance_seed, run_pipeline, ExplainConfig, Explanation, LocalSetSummary,
    NeighborhoodSummary, RunConfig,
};
use defect_guidance::synthesis::{crossover, mutation, LocalLabeledSet};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("miner matches exhaustive enumeration", miner_oracle_equivalence),
        ("measure identities and worked table", measure_identities),
        ("guidance contingency", guidance_contingency),
        ("synthesis operators", synthesis_operators),
        ("neighbourhood threshold", neighborhood_threshold_rule),
        ("forest sanity", forest_sanity),
        ("Fisher exact test", fisher_exact_test),
        ("stability determinism and runtime", stability_determinism),
        ("applicability harness", applicability_harness),
        ("Scott-Knott ESD", scott_knott),
        ("end-to-end determinism", end_to_end_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let label = format!("criterion {:>2}: {name}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| label.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {label} ({detail}; {secs:.1}s)"),
            Err(why) => {
                failed += 1;
                println!("FAIL {label} ({why}; {secs:.1}s)");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

// ----------------------------------------------------------------- criterion 1

fn choose(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r
}

/// One-sided hypergeometric tail as an exact fraction.
fn exact_fisher(a: u64, b: u64, c: u64, d: u64) -> (u128, u128) {
    let (n, row, col) = (a + b + c + d, a + b, a + c);
    let num = (a..=row.min(col)).map(|x| choose(col, x) * choose(n - col, row - x)).sum();
    (num, choose(n, row))
}

fn direct_counts(items: &[usize], q: Label, catalog: &ConditionCatalog, local: &LocalLabeledSet) -> Counts {
    let mut c = Counts { n: local.len(), n_p: 0, n_q: 0, n_pq: 0 };
    for (row, &label) in local.rows.iter().zip(&local.predictions) {
        let holds = items.iter().all(|&i| {
            let e = &catalog.entries[i];
            e.condition.holds(row[e.feature_index])
        });
        c.n_p += holds as usize;
        c.n_q += (label == q) as usize;
        c.n_pq += (holds && label == q) as usize;
    }
    c
}

/// Every antecedent of up to `max_len` conditions on distinct features.
fn antecedents(catalog: &ConditionCatalog, max_len: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut frontier: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for base in &frontier {
            let start = base.last().map_or(0, |&l| l + 1);
            for i in start..catalog.len() {
                let f = catalog.entries[i].feature_index;
                if base.iter().all(|&b| catalog.entries[b].feature_index != f) {
                    let mut items = base.clone();
                    items.push(i);
                    next.push(items);
                }
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn brute_force_top_k(
    local: &LocalLabeledSet,
    catalog: &ConditionCatalog,
    cfg: &MinerConfig,
    q: Label,
) -> Vec<(Vec<usize>, Measures)> {
    let value = |m: &Measures| cfg.objective.value(m);
    let mut kept: Vec<(Vec<usize>, Measures)> = Vec::new();
    for items in antecedents(catalog, cfg.max_len) {
        let counts = direct_counts(&items, q, catalog, local);
        let m = counts.measures();
        if m.coverage < cfg.min_coverage {
            continue;
        }
        let [a, b, c, d] = counts.table();
        let (num, den) = exact_fisher(a as u64, b as u64, c as u64, d as u64);
        if !is_significant(num as f64 / den as f64, cfg.alpha) {
            continue;
        }
        let redundant = (1u32..(1 << items.len()) - 1).any(|keep| {
            let sub: Vec<usize> =
                items.iter().enumerate().filter(|(bit, _)| keep & (1 << bit) != 0).map(|(_, &i)| i).collect();
            value(&direct_counts(&sub, q, catalog, local).measures()) >= value(&m)
        });
        if !redundant {
            kept.push((items, m));
        }
    }
    kept.sort_by(|x, y| compare_ranked(cfg.objective, (&x.1, &x.0), (&y.1, &y.0)));
    kept.truncate(cfg.k);
    kept
}

fn toy_local_set(rng: &mut ChaCha8Rng) -> LocalLabeledSet {
    let names = ["CountLine", "DDEV", "OWN_LINE", "COMM"];
    loop {
        let n_rows = rng.gen_range(6..=20);
        let n_features = rng.gen_range(1..=4);
        let rows: Vec<Vec<f64>> =
            (0..n_rows).map(|_| (0..n_features).map(|_| rng.gen_range(0..7) as f64).collect()).collect();
        let labels: Vec<Label> =
            (0..n_rows).map(|_| if rng.gen_bool(0.45) { Label::Defect } else { Label::Clean }).collect();
        if labels.contains(&Label::Defect) && labels.contains(&Label::Clean) {
            let feature_names = names[..n_features].iter().map(|s| s.to_string()).collect();
            return LocalLabeledSet::from_rows(feature_names, rows, labels);
        }
    }
}

fn miner_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut compared = 0;
    let mut rules_seen = 0;
    for set in 0..50 {
        let local = toy_local_set(&mut rng);
        let bins = rng.gen_range(2..=4);
        let catalog = discretize(&local, bins).map_err(|e| e.to_string())?;
        let base = MinerConfig {
            k: rng.gen_range(1..=6),
            max_len: rng.gen_range(1..=2),
            min_coverage: [0.0, 0.05, 0.2][rng.gen_range(0..3)],
            alpha: [0.05, 0.3, 1.0][rng.gen_range(0..3)],
            bins,
            ..MinerConfig::default()
        };
        for objective in Objective::ALL {
            let cfg = base.with_objective(objective);
            let mined = mine_k_optimal(&local, &catalog, &cfg).map_err(|e| e.to_string())?;
            for q in Label::BOTH {
                let expected = brute_force_top_k(&local, &catalog, &cfg, q);
                let got = mined.for_class(q);
                ensure!(
                    got.len() == expected.len(),
                    "set {set} {objective} {q}: {} rules mined, oracle has {}",
                    got.len(),
                    expected.len()
                );
                for (rule, (items, m)) in got.iter().zip(&expected) {
                    let conditions: Vec<Condition> =
                        items.iter().map(|&i| catalog.entries[i].condition.clone()).collect();
                    ensure!(
                        rule.antecedent == conditions && rule.measures() == *m,
                        "set {set} {objective} {q}: mined {rule} but oracle ranks {conditions:?}"
                    );
                }
                compared += 1;
                rules_seen += got.len();
            }
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!("{compared} top-k lists, {rules_seen} rules identical"))
}

// ----------------------------------------------------------------- criterion 2

fn measure_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let names: Vec<String> = ["CountLine", "DDEV", "OWN_LINE"].iter().map(|s| s.to_string()).collect();
    let mut max_err: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(5..80);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.gen_range(0.0..10.0)).collect()).collect();
        let labels: Vec<Label> = (0..n).map(|_| if rng.gen_bool(0.5) { Label::Defect } else { Label::Clean }).collect();
        let local = LocalLabeledSet::from_rows(names.clone(), rows, labels);
        let antecedent: Vec<Condition> = (0..rng.gen_range(1..=3))
            .map(|_| {
                let f = &names[rng.gen_range(0..3)];
                let v = rng.gen_range(0.0..10.0);
                match rng.gen_range(0..3) {
                    0 => Condition::le(f, v),
                    1 => Condition::gt(f, v),
                    _ => Condition::between(f, v * 0.5, v),
                }
            })
            .collect();
        let q = if rng.gen_bool(0.5) { Label::Defect } else { Label::Clean };
        let m = rule_counts(&antecedent, q, &local).map_err(|e| e.to_string())?.measures();

        let holds =
            |row: &[f64]| antecedent.iter().all(|c| c.holds(row[names.iter().position(|n| *n == c.feature).unwrap()]));
        let n_f = n as f64;
        let sup_q = local.predictions.iter().filter(|&&l| l == q).count() as f64 / n_f;
        let sup_p = local.rows.iter().filter(|r| holds(r)).count() as f64 / n_f;
        let sup_pq =
            local.rows.iter().zip(&local.predictions).filter(|(r, &l)| holds(r) && l == q).count() as f64 / n_f;
        ensure!((m.coverage - sup_p).abs() < 1e-12, "coverage {} vs support(p) {sup_p}", m.coverage);
        let e2 = (m.confidence * sup_p - sup_pq).abs();
        let e1 = if sup_p > 0.0 { (m.lift * sup_q - m.confidence).abs() } else { 0.0 };
        max_err = max_err.max(e1).max(e2);
        ensure!(e1 < 1e-9 && e2 < 1e-9, "identity broken: {m:?} sup_q {sup_q} sup_pq {sup_pq}");
    }

    // 10 rows, 6 satisfy the antecedent, 5 of those defective, 5 defective overall
    let rows: Vec<Vec<f64>> =
        [200.0, 210.0, 220.0, 230.0, 240.0, 250.0, 10.0, 20.0, 30.0, 40.0].iter().map(|&v| vec![v]).collect();
    let d = Label::Defect;
    let c = Label::Clean;
    let local = LocalLabeledSet::from_rows(vec!["CountLine".into()], rows, vec![d, d, d, d, d, c, c, c, c, c]);
    let m = rule_counts(&[Condition::gt("CountLine", 100.0)], d, &local).map_err(|e| e.to_string())?.measures();
    ensure!((m.coverage - 0.6).abs() < 1e-9, "coverage {}", m.coverage);
    ensure!((m.confidence - 5.0 / 6.0).abs() < 1e-9, "confidence {}", m.confidence);
    ensure!((m.lift - 5.0 / 3.0).abs() < 1e-9, "lift {}", m.lift);
    ensure!(format!("{:.4} {:.4}", m.confidence, m.lift) == "0.8333 1.6667", "rounded {m:?}");
    Ok(format!("1000 random rules, max error {max_err:.1e}; table gives 0.6 / 0.8333 / 1.6667"))
}

// ----------------------------------------------------------------- criterion 3

fn guidance_contingency() -> Outcome {
    let schema = MetricSchema::from_names(&["LOC"]).map_err(|e| e.to_string())?;
    let file = Instance { id: "A.java".into(), features: vec![200.0], label: None };
    let rule = |antecedent: Vec<Condition>, consequent| Rule {
        antecedent,
        consequent,
        coverage: 0.4,
        confidence: 0.9,
        lift: 1.5,
        fisher_p: 0.01,
    };
    let worked = [
        (rule(vec![Condition::gt("LOC", 150.0)], Label::Defect), GuidanceType::Supporting),
        (rule(vec![Condition::le("LOC", 500.0)], Label::Clean), GuidanceType::Contradicting),
        (rule(vec![Condition::gt("LOC", 300.0)], Label::Defect), GuidanceType::HypSupporting),
        (rule(vec![Condition::le("LOC", 100.0)], Label::Clean), GuidanceType::HypContradicting),
    ];
    for (r, expected) in &worked {
        let got = classify_rule(r, &schema, &file, Label::Defect).map_err(|e| e.to_string())?;
        ensure!(got == *expected, "{r} classified {got}, expected {expected}");
    }
    let set = RuleSet {
        objective: Objective::Confidence,
        defect: worked.iter().filter(|w| w.0.consequent == Label::Defect).map(|w| w.0.clone()).collect(),
        clean: worked.iter().filter(|w| w.0.consequent == Label::Clean).map(|w| w.0.clone()).collect(),
        no_rules_found: false,
    };
    let plan = build_guidance(&[set], &schema, &file, Label::Defect, 0.7, &BestRuleOrder::default())
        .map_err(|e| e.to_string())?;
    ensure!(plan.filled().count() == 4, "plan fills {} slots", plan.filled().count());
    for (r, t) in &worked {
        ensure!(plan.slot(*t).map(|s| &s.rule) == Some(r), "slot {t} holds the wrong rule");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..1000 {
        let v = rng.gen_range(0.0..400.0f64);
        let cut = rng.gen_range(0.0..400.0f64);
        let inst = Instance { id: "x".into(), features: vec![v], label: None };
        let gt = rng.gen_bool(0.5);
        let (cond, negated) = if gt {
            (Condition::gt("LOC", cut), Condition::le("LOC", cut))
        } else {
            (Condition::le("LOC", cut), Condition::gt("LOC", cut))
        };
        let q = if rng.gen_bool(0.5) { Label::Defect } else { Label::Clean };
        let pred = if rng.gen_bool(0.5) { Label::Defect } else { Label::Clean };
        let t = classify_rule(&rule(vec![cond.clone()], q), &schema, &inst, pred).map_err(|e| e.to_string())?;
        let flipped = classify_rule(&rule(vec![cond], q), &schema, &inst, pred.negate()).map_err(|e| e.to_string())?;
        let neg = classify_rule(&rule(vec![negated], q), &schema, &inst, pred).map_err(|e| e.to_string())?;
        use GuidanceType::*;
        let swap_consequent = match t {
            Supporting => Contradicting,
            Contradicting => Supporting,
            HypSupporting => HypContradicting,
            HypContradicting => HypSupporting,
        };
        let swap_lhs = match t {
            Supporting => HypSupporting,
            HypSupporting => Supporting,
            Contradicting => HypContradicting,
            HypContradicting => Contradicting,
        };
        ensure!(flipped == swap_consequent, "prediction flip of {t} gave {flipped}");
        ensure!(neg == swap_lhs, "negating the antecedent of {t} gave {neg}");
    }
    Ok("worked rules give G1-G4; 1000 random flips and negations consistent".into())
}

// ----------------------------------------------------------------- criterion 4

fn synthesis_operators() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    for _ in 0..10_000 {
        let p = rng.gen_range(1..8);
        let x: Vec<f64> = (0..p).map(|_| rng.gen_range(-1e4..1e4)).collect();
        let y: Vec<f64> = (0..p).map(|_| rng.gen_range(-1e4..1e4)).collect();
        let alpha = rng.gen_range(0.0..1.0);
        let child = crossover(&x, &y, alpha).map_err(|e| e.to_string())?;
        for i in 0..p {
            ensure!(
                child[i] >= x[i].min(y[i]) && child[i] <= x[i].max(y[i]),
                "child {} outside [{}, {}]",
                child[i],
                x[i],
                y[i]
            );
        }
        ensure!(bits(&crossover(&x, &y, 0.0).unwrap()) == bits(&x), "alpha 0 changed the first parent");
        ensure!(bits(&crossover(&x, &y, 1.0).unwrap()) == bits(&y), "alpha 1 differs from the second parent");
        let mu = rng.gen_range(0.5..=1.0);
        ensure!(bits(&mutation(&x, &y, &y, mu).unwrap()) == bits(&x), "mutation with equal donors moved x");
    }
    Ok("10^4 draws inside the parent box; endpoint identities bitwise".into())
}

// ----------------------------------------------------------------- criterion 5

fn neighborhood_threshold_rule() -> Outcome {
    let defect: Vec<f64> = vec![0.99, 0.97, 0.96, 0.95, 0.93, 0.92, 0.9, 0.88, 0.85, 0.8, 0.7, 0.5];
    let clean: Vec<f64> = vec![0.99, 0.98, 0.97, 0.96, 0.95, 0.94, 0.93, 0.92, 0.91, 0.9, 0.6];
    let t = neighborhood_threshold(&defect, &clean, 10).ok_or("no threshold")?;
    ensure!(t == 0.8, "threshold {t}");
    let selected = defect.iter().chain(&clean).filter(|&&s| s >= t).count();
    ensure!(selected == 20, "{selected} selected at 0.8");

    let schema = MetricSchema::from_names(&["CountLine", "DDEV", "OWN_LINE"]).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for set in 0..100 {
        let n = rng.gen_range(6..40);
        let instances: Vec<Instance> = (0..n)
            .map(|i| Instance {
                id: format!("f{i}"),
                features: (0..3).map(|_| rng.gen_range(0.0..50.0)).collect(),
                label: Some(if i % 3 == 0 { Label::Defect } else { Label::Clean }),
            })
            .collect();
        let data = Dataset::new(schema.clone(), "r", instances).map_err(|e| e.to_string())?;
        let norm = zscore_fit(&data).map_err(|e| e.to_string())?;
        let target = &data.instances[rng.gen_range(0..data.len())];
        let mut previous: Option<(f64, BTreeSet<String>)> = None;
        for top_n in 1..=15 {
            let cfg = NeighborhoodConfig { top_n, kernel_width: None };
            let s = select_neighborhood(&data, &norm, target, &cfg).map_err(|e| e.to_string())?;
            let ids: BTreeSet<String> = s.selected.iter().map(|i| i.id.clone()).collect();
            ensure!(!ids.contains(&target.id), "explained file selected as its own neighbour");
            if let Some((t_prev, ids_prev)) = &previous {
                ensure!(s.similarity_threshold <= *t_prev, "set {set}: threshold rose at N={top_n}");
                ensure!(ids.is_superset(ids_prev), "set {set}: neighbourhood shrank at N={top_n}");
            }
            previous = Some((s.similarity_threshold, ids));
        }
    }
    Ok("0.8 vs 0.9 gives 0.8; monotone in N on 100 datasets".into())
}

// ----------------------------------------------------------------- criterion 6

fn two_feature_set(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instances = (0..n)
        .map(|i| {
            let a: f64 = rng.gen_range(0.0..1.0);
            let b: f64 = rng.gen_range(0.0..1.0);
            let label = if a + b > 1.0 { Label::Defect } else { Label::Clean };
            Instance { id: format!("f{i}"), features: vec![a, b], label: Some(label) }
        })
        .collect();
    Dataset::new(MetricSchema::from_names(&["CountLine", "DDEV"]).unwrap(), "lin", instances).unwrap()
}

fn holdout_auc(model: &defect_guidance::ForestModel, test: &Dataset) -> Result<f64, String> {
    let scores: Vec<f64> = test.instances.iter().map(|i| model.predict_proba(&i.features).unwrap()).collect();
    let labels: Vec<Label> = test.instances.iter().map(|i| i.label.unwrap()).collect();
    auc(&scores, &labels).map_err(|e| e.to_string())
}

fn forest_sanity() -> Outcome {
    let train = two_feature_set(500, 1);
    let test = two_feature_set(500, 2);
    let model = train_forest(&train, 100, 3).map_err(|e| e.to_string())?;
    let separable = holdout_auc(&model, &test)?;
    ensure!(separable > 0.95, "separable AUC {separable}");

    let mut shuffled_aucs = Vec::new();
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut train = two_feature_set(500, 10 + seed);
        let mut test = two_feature_set(500, 20 + seed);
        for d in [&mut train, &mut test] {
            let mut labels: Vec<Option<Label>> = d.instances.iter().map(|i| i.label).collect();
            labels.shuffle(&mut rng);
            for (inst, l) in d.instances.iter_mut().zip(labels) {
                inst.label = l;
            }
        }
        let model = train_forest(&train, 100, seed).map_err(|e| e.to_string())?;
        let a = holdout_auc(&model, &test)?;
        ensure!((0.43..=0.57).contains(&a), "shuffled-label AUC {a} with seed {seed}");
        shuffled_aucs.push(a);
    }

    let scores: Vec<f64> = test.instances.iter().map(|i| model.predict_proba(&i.features).unwrap()).collect();
    let labels: Vec<Label> = test.instances.iter().map(|i| i.label.unwrap()).collect();
    let base = auc(&scores, &labels).map_err(|e| e.to_string())?;
    for transform in [|s: f64| s * s * s, |s: f64| (5.0 * s).exp(), |s: f64| 2.0 * s - 7.0] {
        let t: Vec<f64> = scores.iter().map(|&s| transform(s)).collect();
        let a = auc(&t, &labels).map_err(|e| e.to_string())?;
        ensure!(a == base, "transformed AUC {a} vs {base}");
    }
    let shuffled: Vec<String> = shuffled_aucs.iter().map(|a| format!("{a:.3}")).collect();
    Ok(format!("separable AUC {separable:.3}; shuffled {}", shuffled.join(", ")))
}

// ----------------------------------------------------------------- criterion 7

fn fisher_exact_test() -> Outcome {
    let (num, den) = exact_fisher(5, 0, 0, 5);
    ensure!(num == 1 && den == 252, "oracle gives {num}/{den}");
    let p = fisher_exact(5, 0, 0, 5);
    ensure!((p - 1.0 / 252.0).abs() < 1e-9, "p = {p}");
    for (a, b, c, d) in [(3, 2, 1, 4), (8, 1, 2, 9), (0, 4, 4, 0), (12, 30, 5, 40), (1, 0, 0, 0)] {
        let (num, den) = exact_fisher(a, b, c, d);
        let p = fisher_exact(a as usize, b as usize, c as usize, d as usize);
        ensure!((p - num as f64 / den as f64).abs() < 1e-9, "table {a},{b},{c},{d}: {p} vs {num}/{den}");
    }
    Ok(format!("[[5,0],[0,5]] -> {p:.6} = 1/252"))
}

// ----------------------------------------------------------------- criterion 8

fn stability_determinism() -> Outcome {
    let train = support::studied_release(300, 1);
    let test = support::studied_release(60, 2);
    let model = train_forest(&train, 100, 1).map_err(|e| e.to_string())?;
    let norm = zscore_fit(&train).map_err(|e| e.to_string())?;
    let inst = test
        .instances
        .iter()
        .find(|i| model.predict(&i.features).unwrap() == Label::Defect)
        .ok_or("no file predicted defective")?;
    let cfg = ExplainConfig::default();
    let seed = instance_seed(42, &inst.id);

    let start = Instant::now();
    let first = explain_instance(&model, &train, &norm, inst, &cfg, seed).map_err(|e| e.to_string())?;
    let once = start.elapsed();
    ensure!(first.local_set.n_rows >= 1000, "local set has {} rows", first.local_set.n_rows);
    ensure!(once < Duration::from_secs(30), "one explanation took {once:?}");
    let first_json = serde_json::to_string(&first).unwrap();

    // the timed run is the first of the ten compared
    let mut runs = 0;
    let report = evaluation::stability(&inst.id, &[seed; 10], |s| -> Result<BTreeSet<String>, String> {
        let ex = if runs == 0 {
            first.clone()
        } else {
            explain_instance(&model, &train, &norm, inst, &cfg, s).map_err(|e| e.to_string())?
        };
        runs += 1;
        if serde_json::to_string(&ex).unwrap() != first_json {
            return Err(format!("rerun {runs} produced a different explanation"));
        }
        evaluation::stability_features(&ex.rulesets, &train.schema, inst, ex.prediction, StabilityMode::BestRules)
            .map_err(|e| e.to_string())
    })
    .map_err(|e| e.to_string())?;
    ensure!(report.pairs.len() == 45, "{} pairs", report.pairs.len());
    ensure!(report.pairs.iter().all(|p| p.value == 1.0), "median Jaccard {}", report.median_jaccard);
    Ok(format!(
        "{} local rows explained in {:.1}s; 45 pairs at Jaccard 1.0 over {} features",
        first.local_set.n_rows,
        once.as_secs_f64(),
        report.feature_sets[0].len()
    ))
}

// ----------------------------------------------------------------- criterion 9

struct ScriptedFile {
    loc: [f64; 3],
    own: [f64; 3],
    has_g4: bool,
    in_next: bool,
}

/// The scripted project model: defective when large or poorly owned.
fn scripted_prediction(loc: f64, own: f64) -> Label {
    if loc > 300.0 || own < 0.2 {
        Label::Defect
    } else {
        Label::Clean
    }
}

fn applicability_harness() -> Outcome {
    let f = |loc: [f64; 3], own: [f64; 3], has_g4, in_next| ScriptedFile { loc, own, has_g4, in_next };
    let mut files = Vec::new();
    // shrunk below the G4 bound and flipped to clean
    for _ in 0..4 {
        files.push(f([520.0, 480.0, 200.0], [0.8, 0.8, 0.8], true, true));
    }
    // shrunk, flipped, but still above the bound
    for _ in 0..2 {
        files.push(f([450.0, 460.0, 280.0], [0.7, 0.7, 0.7], true, true));
    }
    // untouched and still defective
    for _ in 0..3 {
        files.push(f([600.0, 610.0, 610.0], [0.6, 0.6, 0.6], true, true));
    }
    // followed the bound but ownership collapsed
    files.push(f([350.0, 400.0, 240.0], [0.5, 0.5, 0.1], true, true));
    // no G4 guidance
    files.push(f([700.0, 700.0, 700.0], [0.9, 0.9, 0.9], false, true));
    // deleted before the next release
    files.push(f([330.0, 340.0, 0.0], [0.9, 0.9, 0.9], true, false));
    // clean files are never evaluated
    for i in 0..8 {
        let loc = 50.0 + 20.0 * i as f64;
        files.push(f([loc, loc + 10.0, loc + 200.0], [0.9, 0.9, 0.9], true, true));
    }
    ensure!(files.len() == 20, "{} files", files.len());

    let schema = MetricSchema::from_names(&["CountLine", "OWN_LINE"]).map_err(|e| e.to_string())?;
    let release = |r: usize| -> Dataset {
        let instances = files
            .iter()
            .enumerate()
            .filter(|(_, s)| r < 2 || s.in_next)
            .map(|(i, s)| Instance {
                id: format!("F{i:02}.java"),
                features: vec![s.loc[r], s.own[r]],
                label: Some(scripted_prediction(s.loc[r], s.own[r])),
            })
            .collect();
        Dataset::new(schema.clone(), &format!("p-{r}"), instances).unwrap()
    };
    let (current, next) = (release(1), release(2));

    let g4 = Rule {
        antecedent: vec![Condition::le("CountLine", 250.0)],
        consequent: Label::Clean,
        coverage: 0.3,
        confidence: 0.9,
        lift: 2.0,
        fisher_p: 0.001,
    };
    let mut explanations = Vec::new();
    for (inst, script) in current.instances.iter().zip(&files) {
        let prediction = scripted_prediction(inst.features[0], inst.features[1]);
        if prediction != Label::Defect {
            continue;
        }
        let set = RuleSet {
            objective: Objective::Confidence,
            defect: Vec::new(),
            clean: if script.has_g4 { vec![g4.clone()] } else { Vec::new() },
            no_rules_found: !script.has_g4,
        };
        let plan =
            build_guidance(std::slice::from_ref(&set), &schema, inst, prediction, 0.8, &BestRuleOrder::default())
                .map_err(|e| e.to_string())?;
        ensure!(plan.hyp_contradicting.is_some() == script.has_g4, "{} G4 slot mismatch", inst.id);
        explanations.push(Explanation {
            instance_id: inst.id.clone(),
            prediction,
            probability: 0.8,
            seed: 0,
            feature_names: schema.feature_names(),
            train_range: FeatureRange { min: vec![0.0, 0.0], max: vec![1000.0, 1.0] },
            neighborhood: NeighborhoodSummary {
                similarity_threshold: 0.5,
                kernel_width: 1.0,
                n_selected: 0,
                top_defect_ids: Vec::new(),
                top_clean_ids: Vec::new(),
            },
            local_set: LocalSetSummary {
                n_rows: 0,
                nearest: 0,
                crossover: 0,
                mutation: 0,
                predicted_defect: 0,
                predicted_clean: 0,
            },
            rulesets: vec![set],
            plan,
        });
    }
    let report =
        applicability_report(&explanations, &schema, &next, |i| Ok(scripted_prediction(i.features[0], i.features[1])))
            .map_err(|e| e.to_string())?;
    let t = &report.tally;
    ensure!(
        (t.changed_and_followed, t.changed_not_followed, t.unchanged_not_followed, t.unchanged_but_followed)
            == (4, 2, 3, 1),
        "tally {t:?}"
    );
    ensure!(t.missing_in_next == 1 && t.without_g4 == 1, "tally {t:?}");
    let changed = report.changed_followed_pct.ok_or("no changed files")?;
    let unchanged = report.unchanged_not_followed_pct.ok_or("no unchanged files")?;
    ensure!(changed == 100.0 * 4.0 / 6.0, "changed&followed {changed}%");
    ensure!(unchanged == 75.0, "unchanged&not followed {unchanged}%");
    let outcomes: Vec<Option<ApplicabilityOutcome>> = report.rows.iter().map(|r| r.outcome).collect();
    ensure!(outcomes.iter().filter(|o| o.is_none()).count() == 1, "rows {outcomes:?}");
    Ok(format!("{changed:.2}% changed files followed, {unchanged:.0}% unchanged files did not"))
}

// ---------------------------------------------------------------- criterion 10

fn scott_knott() -> Outcome {
    let same: BTreeMap<String, Vec<f64>> =
        ["rf", "lr", "nb", "cart"].iter().map(|t| (t.to_string(), vec![0.70, 0.72, 0.75, 0.71, 0.74, 0.73])).collect();
    let g = scott_knott_esd(&same).map_err(|e| e.to_string())?;
    ensure!(g.groups.len() == 1, "{} groups for identical samples", g.groups.len());

    let separated: BTreeMap<String, Vec<f64>> = [
        ("rf", vec![0.90, 0.91, 0.92, 0.93, 0.94, 0.95, 0.96, 0.97, 0.98, 0.99]),
        ("lr", vec![0.70, 0.71, 0.72, 0.73, 0.74, 0.75, 0.76, 0.77, 0.78, 0.79]),
        ("nb", vec![0.50, 0.51, 0.52, 0.53, 0.54, 0.55, 0.56, 0.57, 0.58, 0.59]),
    ]
    .into_iter()
    .map(|(t, s)| (t.to_string(), s))
    .collect();
    let g = scott_knott_esd(&separated).map_err(|e| e.to_string())?;
    ensure!(g.groups.len() == 3, "{} groups for separated samples", g.groups.len());
    ensure!(g.rank_of("rf") == Some(1) && g.rank_of("lr") == Some(2) && g.rank_of("nb") == Some(3), "ranks {g:?}");
    for (a, b) in [("rf", "lr"), ("lr", "nb"), ("rf", "nb")] {
        let d = cliffs_delta(&separated[a], &separated[b]);
        ensure!(d.abs() == 1.0, "delta({a}, {b}) = {d}");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..50 {
        let n_tech = rng.gen_range(2..7);
        let samples: Vec<Vec<f64>> = (0..n_tech)
            .map(|_| {
                let centre = rng.gen_range(0.5..0.9);
                (0..10).map(|_| centre + rng.gen_range(-0.05..0.05)).collect()
            })
            .collect();
        let mut names: Vec<usize> = (0..n_tech).collect();
        names.shuffle(&mut rng);
        let original: BTreeMap<String, Vec<f64>> =
            samples.iter().enumerate().map(|(i, s)| (format!("tech{i}"), s.clone())).collect();
        let permuted: BTreeMap<String, Vec<f64>> =
            samples.iter().enumerate().map(|(i, s)| (format!("m{}", names[i]), s.clone())).collect();
        let a = scott_knott_esd(&original).map_err(|e| e.to_string())?;
        let b = scott_knott_esd(&permuted).map_err(|e| e.to_string())?;
        ensure!(a.groups.len() == b.groups.len(), "group count changed under relabelling");
        for (i, name) in names.iter().enumerate() {
            ensure!(
                a.rank_of(&format!("tech{i}")) == b.rank_of(&format!("m{name}")),
                "rank of technique {i} changed under relabelling"
            );
        }
        let medians_a: Vec<f64> = a.groups.iter().map(|g| g.median).collect();
        let medians_b: Vec<f64> = b.groups.iter().map(|g| g.median).collect();
        ensure!(medians_a == medians_b, "group medians changed under relabelling");
    }
    Ok("identical -> 1 group; separated -> 3 groups at |delta| 1; relabelling leaves ranks unchanged".into())
}

// ---------------------------------------------------------------- criterion 11

fn collect_files(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            collect_files(root, &path, out);
        } else {
            let rel = path.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
            out.insert(rel, fs::read(&path).unwrap());
        }
    }
}

fn end_to_end_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let [train, test, next] = support::write_small_project(dir.path(), 60);
    let run = |out: &str, threads: usize| -> Result<BTreeMap<String, Vec<u8>>, String> {
        let mut cfg = RunConfig::new(&train, &test, dir.path().join(out));
        cfg.validate = Some(next.clone());
        cfg.seed = 17;
        cfg.n_trees = 30;
        cfg.threads = Some(threads);
        cfg.explain.synthesis.n_synthetic = 200;
        let manifest = run_pipeline(&cfg).map_err(|e| e.to_string())?;
        if manifest.n_explained == 0 {
            return Err("nothing explained".into());
        }
        let mut files = BTreeMap::new();
        collect_files(&cfg.out_dir, &cfg.out_dir, &mut files);
        Ok(files)
    };
    let a = run("a", 1)?;
    let b = run("b", 3)?;
    let names_a: Vec<&String> = a.keys().collect();
    let names_b: Vec<&String> = b.keys().collect();
    ensure!(names_a == names_b, "different artifact sets");
    let mut json = 0;
    let mut svg = 0;
    for (name, bytes) in &a {
        ensure!(b[name] == *bytes, "{name} differs between runs");
        if name.ends_with(".json") {
            json += 1;
            serde_json::from_slice::<serde_json::Value>(bytes).map_err(|e| format!("{name}: {e}"))?;
        }
        if name.ends_with(".svg") {
            svg += 1;
            let text = std::str::from_utf8(bytes).map_err(|e| e.to_string())?;
            let doc = roxmltree::Document::parse(text).map_err(|e| format!("{name}: {e}"))?;
            ensure!(doc.root_element().tag_name().name() == "svg", "{name} root is not svg");
        }
    }
    ensure!(svg > 0, "no SVG report emitted");
    Ok(format!("{json} JSON artifacts byte-identical across runs; {svg} SVG reports well-formed"))
}
