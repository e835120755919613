#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use defect_guidance::dataset::{Dataset, Instance, Label, MetricSchema};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SMALL_METRICS: [&str; 6] =
    ["CountLine", "CountLineCodeDecl", "RatioCommentToCode", "OWN_LINE", "MINOR_COMMIT", "DDEV"];

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("data").join(name)
}

pub fn csv_text(names: &[&str], instances: &[Instance]) -> String {
    let mut out = format!("File,{},RealBug\n", names.join(","));
    for inst in instances {
        let values: Vec<String> = inst.features.iter().map(|v| v.to_string()).collect();
        let label = match inst.label {
            Some(Label::Defect) => "TRUE",
            Some(Label::Clean) => "FALSE",
            None => "",
        };
        writeln!(out, "{},{},{}", inst.id, values.join(","), label).unwrap();
    }
    out
}

/// Files of one release of a small project. Risk grows with size and the
/// number of minor contributors, and falls with ownership.
pub fn small_release(n_files: usize, seed: u64, drift: f64) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_files)
        .map(|i| {
            let loc = (rng.gen_range(20.0..900.0f64) * (1.0 + drift)).round();
            let decl = (loc * rng.gen_range(0.05..0.3f64)).round();
            let ratio = (rng.gen_range(0.0..1.2f64) * 100.0).round() / 100.0;
            let own = (rng.gen_range(0.2..1.0f64) * 100.0).round() / 100.0;
            let minor = rng.gen_range(0..6) as f64;
            let ddev = rng.gen_range(1..9) as f64;
            let risk = loc / 900.0 + minor / 5.0 - own + rng.gen_range(-0.3..0.3);
            let label = if risk > 0.2 { Label::Defect } else { Label::Clean };
            Instance {
                id: format!("src/pkg/File{i:03}.java"),
                features: vec![loc, decl, ratio, own, minor, ddev],
                label: Some(label),
            }
        })
        .collect()
}

pub fn small_dataset(n_files: usize, seed: u64) -> Dataset {
    Dataset::new(MetricSchema::from_names(&SMALL_METRICS).unwrap(), "small", small_release(n_files, seed, 0.0)).unwrap()
}

/// Writes train, test and next releases of the small project into `dir`.
pub fn write_small_project(dir: &Path, n_files: usize) -> [PathBuf; 3] {
    let names = ["proj-1.0.csv", "proj-1.1.csv", "proj-1.2.csv"];
    let mut paths = Vec::new();
    for (r, name) in names.iter().enumerate() {
        let path = dir.join(name);
        std::fs::write(&path, csv_text(&SMALL_METRICS, &small_release(n_files, 100 + r as u64, 0.05 * r as f64)))
            .unwrap();
        paths.push(path);
    }
    paths.try_into().unwrap()
}

/// Release over the 65 studied metrics with integer-valued features.
pub fn studied_release(n_files: usize, seed: u64) -> Dataset {
    let schema = MetricSchema::studied();
    let p = schema.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instances = (0..n_files)
        .map(|i| {
            let features: Vec<f64> = (0..p).map(|_| rng.gen_range(0.0..100.0f64).floor()).collect();
            let risk = features[0] + features[40] + rng.gen_range(0.0..60.0);
            let label = if risk > 130.0 { Label::Defect } else { Label::Clean };
            Instance { id: format!("F{i}.java"), features, label: Some(label) }
        })
        .collect();
    Dataset::new(schema, "studied", instances).unwrap()
}
