use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use defect_guidance::evaluation::{self, StabilityMode};
use defect_guidance::miner::{MinerConfig, Objective};
use defect_guidance::neighborhood::NeighborhoodConfig;
use defect_guidance::pipeline::{self, ExplainConfig, ExplainScope, Explanation, PipelineError, RunConfig, Stage};
use defect_guidance::synthesis::{ParentPool, SynthesisConfig};
use defect_guidance::{forest, report};

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;

#[derive(Parser)]
#[command(name = "defect-guidance", version, about = "Rule-based guidance for files a defect model flags as risky")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a random forest on one release and save it as JSON.
    Train(TrainArgs),
    /// Explain files of the test release and write plans and reports.
    Explain(RunArgs),
    /// Explain, then evaluate rule quality, applicability and stability.
    Evaluate(EvaluateArgs),
    /// Render SVG/HTML reports from saved plan files.
    Report(ReportArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = forest::DEFAULT_N_TREES)]
    n_trees: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum PoolArg {
    Neighborhood,
    Training,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Coverage,
    Confidence,
    Lift,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Coverage => Objective::Coverage,
            ObjectiveArg::Confidence => Objective::Confidence,
            ObjectiveArg::Lift => Objective::Lift,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Training release (k-1).
    #[arg(long)]
    train: PathBuf,
    /// Release whose files are explained (k).
    #[arg(long)]
    test: PathBuf,
    /// Feature schema JSON; defaults to every non-key column of the training CSV.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Saved forest to use instead of training one.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = forest::DEFAULT_N_TREES)]
    n_trees: usize,
    #[arg(long, default_value_t = 10)]
    top_n: usize,
    /// Similarity kernel width; defaults to 0.75 * sqrt(#features).
    #[arg(long)]
    kernel_width: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    n_synthetic: usize,
    #[arg(long, default_value_t = 0.5)]
    crossover_fraction: f64,
    #[arg(long, value_enum, default_value = "neighborhood")]
    parent_pool: PoolArg,
    /// Keep mutation children outside the training range.
    #[arg(long)]
    no_clip: bool,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 3)]
    max_len: usize,
    #[arg(long, default_value_t = 0.05)]
    min_coverage: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 8)]
    bins: usize,
    /// Objectives to mine (comma separated); all three by default.
    #[arg(long, value_enum, value_delimiter = ',')]
    objective: Vec<ObjectiveArg>,
    /// Only explain these file ids (comma separated).
    #[arg(long, value_delimiter = ',')]
    files: Option<Vec<String>>,
    /// Explain every file rather than only predicted-defective ones.
    #[arg(long)]
    all_files: bool,
    /// Worker threads; falls back to DEFECT_GUIDANCE_THREADS.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    no_reports: bool,
    #[arg(long)]
    out: PathBuf,
}

impl RunArgs {
    fn config(&self, validate: Option<PathBuf>) -> RunConfig {
        let objectives = if self.objective.is_empty() {
            Objective::ALL.to_vec()
        } else {
            self.objective.iter().map(|&o| o.into()).collect()
        };
        RunConfig {
            train: self.train.clone(),
            test: self.test.clone(),
            validate,
            schema: self.schema.clone(),
            model: self.model.clone(),
            out_dir: self.out.clone(),
            seed: self.seed,
            n_trees: self.n_trees,
            explain: ExplainConfig {
                neighborhood: NeighborhoodConfig { top_n: self.top_n, kernel_width: self.kernel_width },
                synthesis: SynthesisConfig {
                    n_synthetic: self.n_synthetic,
                    crossover_fraction: self.crossover_fraction,
                    rng_seed: self.seed,
                    clip_to_train_range: !self.no_clip,
                    parent_pool: match self.parent_pool {
                        PoolArg::Neighborhood => ParentPool::Neighborhood,
                        PoolArg::Training => ParentPool::Training,
                    },
                },
                miner: MinerConfig {
                    k: self.k,
                    max_len: self.max_len,
                    min_coverage: self.min_coverage,
                    alpha: self.alpha,
                    bins: self.bins,
                    ..MinerConfig::default()
                },
                objectives,
                ..ExplainConfig::default()
            },
            scope: if self.all_files { ExplainScope::All } else { ExplainScope::PredictedDefect },
            files: self.files.clone(),
            threads: self.threads,
            write_reports: !self.no_reports,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StabilityArg {
    Best,
    All,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Next release (k+1) for the applicability check.
    #[arg(long)]
    validate: Option<PathBuf>,
    /// Reruns per file for the stability study; 0 skips it.
    #[arg(long, default_value_t = 0)]
    stability_runs: usize,
    #[arg(long, value_enum, default_value = "best")]
    stability_mode: StabilityArg,
    /// `technique,auc` CSV to rank with Scott-Knott ESD.
    #[arg(long)]
    auc_samples: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// A plan JSON file or a directory of them.
    #[arg(long)]
    plans: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train(&a),
        Command::Explain(a) => explain(&a),
        Command::Evaluate(a) => evaluate(&a),
        Command::Report(a) => render(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_DATA })
        }
    }
}

fn train(a: &TrainArgs) -> Result<(), PipelineError> {
    if !a.train.is_file() {
        return Err(PipelineError::config(format!("input file {} does not exist", a.train.display())));
    }
    if a.n_trees == 0 {
        return Err(PipelineError::config("the forest needs at least one tree"));
    }
    let schema = pipeline::load_schema(a.schema.as_deref(), &a.train)?;
    let data = pipeline::load_release(&a.train, &schema)?;
    let model = forest::train_forest(&data, a.n_trees, a.seed).map_err(|e| PipelineError::new(Stage::Train, e))?;
    fs::create_dir_all(&a.out).map_err(|e| PipelineError::new(Stage::Write, e))?;
    let path = a.out.join("model.json");
    model.save(&path).map_err(|e| PipelineError::new(Stage::Write, e))?;
    println!("trained {} trees on {} files -> {}", model.n_trees, data.len(), path.display());
    Ok(())
}

fn explain(a: &RunArgs) -> Result<(), PipelineError> {
    let manifest = pipeline::run_pipeline(&a.config(None))?;
    println!(
        "explained {} of {} files in {}; {} artifacts in {}",
        manifest.n_explained,
        manifest.n_test_files,
        manifest.test_release,
        manifest.artifacts.len() + 1,
        a.out.display()
    );
    Ok(())
}

fn evaluate(a: &EvaluateArgs) -> Result<(), PipelineError> {
    let cfg = a.run.config(a.validate.clone());
    cfg.validate()?;
    if a.stability_runs == 1 {
        return Err(PipelineError::config("stability needs at least 2 runs"));
    }
    let mut extra = Vec::new();
    if let Some(path) = &a.auc_samples {
        let file = fs::File::open(path).map_err(|e| PipelineError::config(format!("{}: {e}", path.display())))?;
        let samples = evaluation::read_auc_samples(file).map_err(|e| PipelineError::new(Stage::Evaluate, e))?;
        let groups = evaluation::scott_knott_esd(&samples).map_err(|e| PipelineError::new(Stage::Evaluate, e))?;
        for g in &groups.groups {
            println!("rank {}: {} (median {:.3})", g.rank, g.techniques.join(", "), g.median);
        }
        extra.push(("scott_knott.json".to_string(), to_json(&groups)?));
    }
    let mode = match a.stability_mode {
        StabilityArg::Best => StabilityMode::BestRules,
        StabilityArg::All => StabilityMode::AllRules,
    };
    let manifest = pipeline::with_thread_pool(cfg.threads, || {
        let run = pipeline::prepare(&cfg)?;
        if a.stability_runs >= 2 {
            let reports = pipeline::stability_study(&cfg, &run, a.stability_runs, mode)?;
            let medians: Vec<f64> = reports.iter().map(|r| r.median_jaccard).collect();
            if let Some(m) = evaluation::median(&medians) {
                println!("stability: median Jaccard {m:.3} over {} files", reports.len());
            }
            extra.push(("stability.json".to_string(), to_json(&reports)?));
        }
        pipeline::write_artifacts(&cfg, &run, &extra)
    })?;
    println!(
        "explained {} of {} files; artifacts in {}",
        manifest.n_explained,
        manifest.n_test_files,
        a.run.out.display()
    );
    let quality = fs::read_to_string(a.run.out.join("rule_quality.json")).unwrap_or_default();
    if let Ok(v) = serde_json::from_str::<serde_json::Value>(&quality) {
        if let Some(p) = v.get("pooled").filter(|p| !p.is_null()) {
            println!("best-rule medians on the test release: {p}");
        }
    }
    Ok(())
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<Vec<u8>, PipelineError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| PipelineError::new(Stage::Write, e))?;
    text.push('\n');
    Ok(text.into_bytes())
}

fn plan_files(path: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    if !path.is_dir() {
        return Err(PipelineError::config(format!("{} does not exist", path.display())));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| PipelineError::new(Stage::Load, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

fn render(a: &ReportArgs) -> Result<(), PipelineError> {
    let mut written = 0;
    for path in plan_files(&a.plans)? {
        let name = path.display().to_string();
        let text = fs::read_to_string(&path).map_err(|e| PipelineError::for_file(Stage::Load, &name, e))?;
        let ex: Explanation =
            serde_json::from_str(&text).map_err(|e| PipelineError::for_file(Stage::Load, &name, e))?;
        if ex.emit_report(&a.out)?.is_some() {
            written += 1;
        } else {
            eprintln!("skipping {}: {}", name, report::ReportError::EmptyPlan(ex.instance_id.clone()));
        }
    }
    println!("wrote {written} report(s) to {}", a.out.display());
    Ok(())
}
