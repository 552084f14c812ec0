use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use gadforge::detectors::MlpaeConfig;
use gadforge::eval::{parse_bytes, report_tables, Budgets, DetectorSpec, EvalReport, RunStatus};
use gadforge::missing::ImputeStrategy;
use gadforge::pipeline::{self, DEFAULT_SEED, GRID_GAMMAS};
use gadforge::ratio::RetentionStrategy;
use gadforge::stats::gmm::DEFAULT_K_CANDIDATES;
use gadforge::synthetic::{write_raw, SyntheticConfig};
use gadforge::{Dataset, GadError, Result};

#[derive(Parser)]
#[command(name = "gadforge", version, about = "Controlled dataset variants and benchmarks for graph anomaly detection")]
struct Cli {
    /// Base directory for relative paths.
    #[arg(long, global = true, env = "GAD_DATA_ROOT")]
    data_root: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clean a raw dataset (JSON manifest) into a dataset directory.
    Ingest {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grow a dataset to `target-n` nodes.
    Expand {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        target_n: usize,
        /// Candidate mixture sizes, comma separated.
        #[arg(long, value_delimiter = ',')]
        k_candidates: Option<Vec<usize>>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Thin the anomaly set to a lower ratio.
    AdjustRatio {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        target: f64,
        /// core, edge or random
        #[arg(long, default_value = "core")]
        strategy: String,
        #[arg(long, default_value_t = 5)]
        cluster_k: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mask attribute cells, optionally imputing them, over a grid of ratios.
    InjectMissing {
        #[arg(long = "in")]
        input: PathBuf,
        /// Single ratio, a comma list, or `lo..hi` for the 0.1-step grid.
        #[arg(long, default_value = "0.1..0.5")]
        gammas: String,
        /// Anomaly-class ratio when it differs from the normal class.
        #[arg(long)]
        gamma1: Option<f64>,
        /// Imputation strategies (mean, median, neighbor), comma separated.
        /// Empty writes masked-only variants.
        #[arg(long, value_delimiter = ',')]
        strategies: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fill the masked cells of a masked variant.
    Impute {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        strategy: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write per-node anomaly scores.
    Score {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        detector: DetectorArgs,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// MLPAE weights output.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train, score and measure one detector on one dataset.
    Evaluate {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        detector: DetectorArgs,
        /// Resident-memory ceiling, e.g. 8GB.
        #[arg(long)]
        mem_budget: Option<String>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate evaluation reports into CSV tables.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-check an expanded variant against its parent, or (with
    /// --replay) regenerate any variant and compare checksums.
    Validate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        replay: bool,
    },
    /// Write a seeded synthetic raw dataset.
    Synthesize {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 16)]
        d: usize,
        #[arg(long, default_value_t = 0.05)]
        anomaly_ratio: f64,
        #[arg(long, default_value_t = 20.0)]
        mean_degree: f64,
        #[arg(long, default_value = "synthetic")]
        source_id: String,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct DetectorArgs {
    /// mlpae, knn, knnK or degree
    #[arg(long)]
    detector: String,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
}

impl DetectorArgs {
    fn spec(&self, seed: u64) -> Result<DetectorSpec> {
        let mut spec = DetectorSpec::parse(&self.detector, seed)?;
        match &mut spec {
            DetectorSpec::Knn { k } => {
                if let Some(v) = self.k {
                    *k = v;
                }
            }
            DetectorSpec::Mlpae(cfg) => {
                let d = MlpaeConfig::default();
                cfg.hidden_dims = self.hidden.clone().unwrap_or(d.hidden_dims);
                cfg.epochs = self.epochs.unwrap_or(d.epochs);
                cfg.batch_size = self.batch_size.unwrap_or(d.batch_size);
                cfg.learning_rate = self.learning_rate.unwrap_or(d.learning_rate);
                cfg.patience = self.patience.unwrap_or(d.patience);
            }
            DetectorSpec::Degree => {}
        }
        Ok(spec)
    }
}

struct Ctx {
    root: Option<PathBuf>,
}

impl Ctx {
    fn path(&self, p: &Path) -> PathBuf {
        match &self.root {
            Some(root) if p.is_relative() => root.join(p),
            _ => p.to_path_buf(),
        }
    }

    /// Explicit output, or a sibling of the input named after the transform.
    fn out(&self, out: &Option<PathBuf>, input: &Path, suffix: &str) -> PathBuf {
        match out {
            Some(o) => self.path(o),
            None => {
                let stem = input
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "dataset".into());
                input
                    .parent()
                    .unwrap_or(Path::new("."))
                    .join(format!("{stem}_{suffix}"))
            }
        }
    }
}

fn parse_gammas(text: &str) -> Result<Vec<f64>> {
    let bad = || GadError::Argument(format!("invalid gamma list {text:?}"));
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        let picked: Vec<f64> = GRID_GAMMAS
            .iter()
            .copied()
            .filter(|&g| g >= lo - 1e-9 && g <= hi + 1e-9)
            .collect();
        if picked.is_empty() {
            return Err(bad());
        }
        return Ok(picked);
    }
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
        .collect()
}

fn fmt_ratio(x: f64) -> String {
    let s = format!("{x}");
    s.replace('.', "p")
}

fn run(cli: Cli) -> Result<Value> {
    let ctx = Ctx { root: cli.data_root };
    match cli.command {
        Command::Ingest { input, out } => {
            let input = ctx.path(&input);
            let out = ctx.out(&out, &input, "ingested");
            let ds = pipeline::ingest(&input)?;
            let m = pipeline::save_variant(&ds, &out)?;
            Ok(json!({
                "out": out,
                "n": ds.graph.node_count(),
                "edges": ds.graph.edge_count(),
                "anomalies": ds.labels.anomaly_count(),
                "isolated_removed": m.parameters.get("isolated_removed"),
            }))
        }
        Command::Expand { input, target_n, k_candidates, seed, out } => {
            let input = ctx.path(&input);
            let out = ctx.out(&out, &input, &format!("n{target_n}"));
            let ks = k_candidates.unwrap_or_else(|| DEFAULT_K_CANDIDATES.to_vec());
            let (ds, validation) = pipeline::expand_variant(&input, target_n, &ks, seed)?;
            pipeline::save_variant(&ds, &out)?;
            Ok(json!({
                "out": out,
                "n": ds.graph.node_count(),
                "edges": ds.graph.edge_count(),
                "validation_passed": validation.passed,
                "degree_p": validation.degree.p_value,
            }))
        }
        Command::AdjustRatio { input, target, strategy, cluster_k, seed, out } => {
            let input = ctx.path(&input);
            let out = ctx.out(&out, &input, &format!("r{}_{strategy}", fmt_ratio(target)));
            let strategy = RetentionStrategy {
                kind: pipeline::parse_retention(&strategy)?,
                cluster_k,
            };
            let ds = pipeline::adjust_variant(&input, target, strategy, seed)?;
            let m = pipeline::save_variant(&ds, &out)?;
            Ok(json!({
                "out": out,
                "anomalies": ds.labels.anomaly_count(),
                "retained_checksum": m.parameters.get("retained_checksum"),
            }))
        }
        Command::InjectMissing { input, gammas, gamma1, strategies, seed, out } => {
            let input = ctx.path(&input);
            let out = ctx.out(&out, &input, "missing");
            let gammas = parse_gammas(&gammas)?;
            let strategies: Vec<ImputeStrategy> = strategies
                .iter()
                .filter(|s| !s.is_empty())
                .map(|s| ImputeStrategy::parse(s))
                .collect::<Result<_>>()?;
            let cells = pipeline::inject_grid(&input, &out, &gammas, gamma1, &strategies, seed)?;
            Ok(json!({
                "out": out,
                "variants": cells.iter().map(|(dir, m)| json!({
                    "dir": dir,
                    "realized_gamma0": m.parameters.get("realized_gamma0"),
                    "realized_gamma1": m.parameters.get("realized_gamma1"),
                    "strategy": m.parameters.get("strategy"),
                })).collect::<Vec<_>>(),
            }))
        }
        Command::Impute { input, strategy, out } => {
            let input = ctx.path(&input);
            let strategy = ImputeStrategy::parse(&strategy)?;
            let out = ctx.out(&out, &input, strategy.name());
            let ds = pipeline::impute_variant(&input, strategy)?;
            pipeline::save_variant(&ds, &out)?;
            Ok(json!({ "out": out }))
        }
        Command::Score { input, detector, seed, checkpoint, out } => {
            let input = ctx.path(&input);
            let spec = detector.spec(seed)?;
            let out = out
                .map(|o| ctx.path(&o))
                .unwrap_or_else(|| input.join(format!("scores_{}.tsv", spec.id())));
            let ds = Dataset::load(&input)?;
            let ckpt = checkpoint.map(|c| ctx.path(&c));
            let scores = pipeline::score_dataset(&ds, &spec, seed, ckpt.as_deref())?;
            scores.write(&out)?;
            Ok(json!({ "out": out, "detector": scores.detector_id, "n": scores.scores.len() }))
        }
        Command::Evaluate { input, detector, mem_budget, seed, out } => {
            let input = ctx.path(&input);
            let spec = detector.spec(seed)?;
            let budgets = Budgets {
                memory_bytes: mem_budget.as_deref().map(parse_bytes).transpose()?,
            };
            let out = out
                .map(|o| ctx.path(&o))
                .unwrap_or_else(|| input.join(format!("report_{}.json", spec.id())));
            let report = pipeline::evaluate_dataset(&input, &spec, &budgets, seed)?;
            report.write(&out)?;
            let summary = json!({ "out": out, "report": report });
            match report.status {
                RunStatus::Ok => Ok(summary),
                RunStatus::OomBudgetExceeded => Err(GadError::BudgetExceeded {
                    budget: budgets.memory_bytes.unwrap_or(0),
                    peak: report.peak_memory_bytes,
                }),
                RunStatus::Error => Err(GadError::Data(
                    report.message.unwrap_or_else(|| "detector failed".into()),
                )),
            }
        }
        Command::Report { reports, out } => {
            let reports: Vec<EvalReport> = reports
                .iter()
                .map(|p| EvalReport::read(&ctx.path(p)))
                .collect::<Result<_>>()?;
            let out = ctx.path(&out.unwrap_or_else(|| PathBuf::from("report")));
            std::fs::create_dir_all(&out).map_err(|e| GadError::io(&out, e))?;
            let tables = report_tables(&reports);
            let mut files = Vec::new();
            for (metric, csv) in &tables {
                let path = out.join(format!("{metric}.csv"));
                std::fs::write(&path, csv).map_err(|e| GadError::io(&path, e))?;
                files.push(path);
            }
            Ok(json!({ "out": out, "tables": files }))
        }
        Command::Validate { input, replay } => {
            let input = ctx.path(&input);
            if replay {
                let scratch = std::env::temp_dir().join(format!(
                    "gadforge-replay-{}",
                    std::process::id()
                ));
                let result = pipeline::replay(&input, &scratch);
                let _ = std::fs::remove_dir_all(&scratch);
                let differing = result?;
                if !differing.is_empty() {
                    return Err(GadError::Consistency(format!(
                        "regenerated artifacts differ: {}",
                        differing.join(", ")
                    )));
                }
                return Ok(json!({ "in": input, "replay": "identical" }));
            }
            let v = pipeline::validate_variant(&input)?;
            if !v.passed {
                return Err(GadError::Data(format!(
                    "expansion checks failed: {}",
                    serde_json::to_string(&v)?
                )));
            }
            Ok(json!({ "in": input, "validation": v }))
        }
        Command::Synthesize { n, d, anomaly_ratio, mean_degree, source_id, seed, out } => {
            let cfg = SyntheticConfig {
                n,
                d,
                anomaly_ratio,
                mean_degree,
                seed,
                ..Default::default()
            };
            let out = ctx.path(&out);
            let manifest = write_raw(&cfg, &source_id, &out)?;
            Ok(json!({ "out": out, "raw_manifest": manifest }))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let err = json!({ "error": "usage", "message": e.to_string().trim_end() });
            eprintln!("{err}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let err = json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{err}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
