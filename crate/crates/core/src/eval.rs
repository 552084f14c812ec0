//! Benchmark runs: train on the training split, score, measure the test
//! split, and account wall-clock time and resident memory against a budget.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::detectors::{
    score_degree, score_knn, score_mlpae, train_mlpae, AbortSignal, MlpaeConfig, ScoreVector,
};
use crate::error::{GadError, Result};
use crate::graph::{AttributedGraph, NodeLabels};
use crate::metrics::{auc_pr, auc_roc, recall_at_k, SplitSpec};

pub const SAMPLE_INTERVAL: Duration = Duration::from_millis(100);
pub const RECALL_DEFINITION: &str =
    "recall@k on the test split with k = number of test anomalies; ties at the cut go to lower node ids";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DetectorSpec {
    Mlpae(MlpaeConfig),
    Knn { k: usize },
    Degree,
}

impl DetectorSpec {
    pub fn id(&self) -> String {
        match self {
            DetectorSpec::Mlpae(_) => "mlpae".into(),
            DetectorSpec::Knn { k } => format!("knn{k}"),
            DetectorSpec::Degree => "degree".into(),
        }
    }

    /// Accepts `mlpae`, `degree`, `knn` (k = 5) and `knnK`.
    pub fn parse(name: &str, seed: u64) -> Result<Self> {
        match name {
            "mlpae" => Ok(DetectorSpec::Mlpae(MlpaeConfig {
                seed,
                ..Default::default()
            })),
            "degree" => Ok(DetectorSpec::Degree),
            "knn" => Ok(DetectorSpec::Knn { k: 5 }),
            other => other
                .strip_prefix("knn")
                .and_then(|k| k.parse().ok())
                .filter(|&k| k > 0)
                .map(|k| DetectorSpec::Knn { k })
                .ok_or_else(|| GadError::Argument(format!("unknown detector {other:?}"))),
        }
    }

    /// Scores every node. Training uses the split's train and validation
    /// ids only; labels are never read.
    pub fn score(
        &self,
        g: &AttributedGraph,
        split: &SplitSpec,
        abort: &AbortSignal,
    ) -> Result<ScoreVector> {
        match self {
            DetectorSpec::Degree => score_degree(g),
            DetectorSpec::Knn { k } => score_knn(g.features(), &split.train_ids, *k, abort),
            DetectorSpec::Mlpae(cfg) => {
                let model = train_mlpae(g.features(), &split.train_ids, &split.val_ids, cfg, abort)?;
                abort.check()?;
                score_mlpae(&model, g.features())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budgets {
    /// Resident-set ceiling in bytes; `None` means unlimited.
    pub memory_bytes: Option<u64>,
}

/// Parses sizes such as `8GB`, `512MiB`, `1MB` or a plain byte count.
/// Unit prefixes are powers of 1024.
pub fn parse_bytes(text: &str) -> Result<u64> {
    let t = text.trim();
    let split = t
        .find(|c: char| !(c.is_ascii_digit() || c == '.'))
        .unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let value: f64 = num
        .parse()
        .map_err(|_| GadError::Argument(format!("invalid size {text:?}")))?;
    let scale: u64 = match unit.trim().to_ascii_uppercase().as_str() {
        "" | "B" => 1,
        "K" | "KB" | "KIB" => 1 << 10,
        "M" | "MB" | "MIB" => 1 << 20,
        "G" | "GB" | "GIB" => 1 << 30,
        "T" | "TB" | "TIB" => 1 << 40,
        _ => return Err(GadError::Argument(format!("invalid size unit in {text:?}"))),
    };
    if !value.is_finite() || value <= 0.0 {
        return Err(GadError::Argument(format!("size must be positive: {text:?}")));
    }
    Ok((value * scale as f64).round() as u64)
}

/// Current resident set size of this process, from `/proc/self/status`.
pub fn resident_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmRSS:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

/// Background sampler tracking peak RSS; raises the abort signal once the
/// budget is exceeded.
pub struct MemoryMonitor {
    peak: Arc<AtomicU64>,
    stop: Arc<AtomicBool>,
    handle: Option<thread::JoinHandle<()>>,
    budget: Option<u64>,
}

impl MemoryMonitor {
    pub fn start(budget: Option<u64>, abort: AbortSignal) -> Self {
        let peak = Arc::new(AtomicU64::new(0));
        let stop = Arc::new(AtomicBool::new(false));
        let sample = {
            let peak = peak.clone();
            let abort = abort.clone();
            move || {
                let rss = resident_bytes().unwrap_or(0);
                peak.fetch_max(rss, Ordering::SeqCst);
                if budget.is_some_and(|b| rss > b) {
                    abort.raise();
                }
            }
        };
        sample();
        let handle = {
            let stop = stop.clone();
            thread::spawn(move || {
                while !stop.load(Ordering::SeqCst) {
                    thread::park_timeout(SAMPLE_INTERVAL);
                    sample();
                }
            })
        };
        Self {
            peak,
            stop,
            handle: Some(handle),
            budget,
        }
    }

    pub fn peak(&self) -> u64 {
        self.peak.load(Ordering::SeqCst)
    }

    /// Takes a final sample, stops the thread and returns
    /// `(peak_bytes, budget_exceeded)`.
    pub fn finish(mut self) -> (u64, bool) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.handle.take() {
            h.thread().unpark();
            let _ = h.join();
        }
        let peak = self.peak().max(resident_bytes().unwrap_or(0));
        (peak, self.budget.is_some_and(|b| peak > b))
    }
}

impl Drop for MemoryMonitor {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.handle.take() {
            h.thread().unpark();
            let _ = h.join();
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    OomBudgetExceeded,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub detector_id: String,
    pub dataset_id: String,
    pub dataset_manifest_ref: String,
    pub status: RunStatus,
    pub auc_roc: Option<f64>,
    pub auc_pr: Option<f64>,
    pub recall_at_k: Option<f64>,
    pub k_used: Option<usize>,
    pub runtime_seconds: f64,
    pub peak_memory_bytes: u64,
    pub memory_budget_bytes: Option<u64>,
    pub test_size: usize,
    pub recall_definition: String,
    pub message: Option<String>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| GadError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GadError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Test-split metrics of a full score vector.
pub fn test_metrics(
    scores: &[f64],
    labels: &NodeLabels,
    test_ids: &[u32],
) -> Result<(f64, f64, f64, usize)> {
    let s: Vec<f64> = test_ids.iter().map(|&i| scores[i as usize]).collect();
    let l: Vec<u8> = test_ids
        .iter()
        .map(|&i| labels.as_slice()[i as usize])
        .collect();
    let roc = auc_roc(&s, &l)?;
    let pr = auc_pr(&s, &l)?;
    let (rec, k) = recall_at_k(&s, &l, None)?;
    Ok((roc, pr, rec, k))
}

pub fn run_benchmark(
    g: &AttributedGraph,
    labels: &NodeLabels,
    dataset_id: &str,
    dataset_manifest_ref: &str,
    detector: &DetectorSpec,
    split: &SplitSpec,
    budgets: &Budgets,
) -> EvalReport {
    let abort = AbortSignal::new();
    let monitor = MemoryMonitor::start(budgets.memory_bytes, abort.clone());
    let start = Instant::now();
    let scored = if abort.is_raised() {
        Err(GadError::Aborted("memory budget exceeded before start".into()))
    } else {
        detector.score(g, split, &abort)
    };
    let runtime_seconds = start.elapsed().as_secs_f64();
    let (peak_memory_bytes, over_budget) = monitor.finish();

    let mut report = EvalReport {
        detector_id: detector.id(),
        dataset_id: dataset_id.to_string(),
        dataset_manifest_ref: dataset_manifest_ref.to_string(),
        status: RunStatus::Ok,
        auc_roc: None,
        auc_pr: None,
        recall_at_k: None,
        k_used: None,
        runtime_seconds,
        peak_memory_bytes,
        memory_budget_bytes: budgets.memory_bytes,
        test_size: split.test_ids.len(),
        recall_definition: RECALL_DEFINITION.to_string(),
        message: None,
    };
    if over_budget || abort.is_raised() {
        report.status = RunStatus::OomBudgetExceeded;
        report.message = Some(format!(
            "peak resident memory {peak_memory_bytes} B exceeded budget {} B",
            budgets.memory_bytes.unwrap_or(0)
        ));
        return report;
    }
    match scored.and_then(|s| test_metrics(&s.scores, labels, &split.test_ids)) {
        Ok((roc, pr, rec, k)) => {
            report.auc_roc = Some(roc);
            report.auc_pr = Some(pr);
            report.recall_at_k = Some(rec);
            report.k_used = Some(k);
        }
        Err(e) => {
            report.status = RunStatus::Error;
            report.message = Some(e.to_string());
        }
    }
    report
}

pub const REPORT_METRICS: [&str; 5] = [
    "auc_roc",
    "auc_pr",
    "recall_at_k",
    "runtime_seconds",
    "peak_memory_mb",
];

fn cell(r: &EvalReport, metric: &str) -> String {
    match r.status {
        RunStatus::OomBudgetExceeded => return "OOM".into(),
        RunStatus::Error => return "ERR".into(),
        RunStatus::Ok => {}
    }
    let v = match metric {
        "auc_roc" => r.auc_roc,
        "auc_pr" => r.auc_pr,
        "recall_at_k" => r.recall_at_k,
        "runtime_seconds" => Some(r.runtime_seconds),
        "peak_memory_mb" => Some(r.peak_memory_bytes as f64 / (1u64 << 20) as f64),
        _ => None,
    };
    match (metric, v) {
        ("runtime_seconds" | "peak_memory_mb", Some(v)) => format!("{v:.2}"),
        (_, Some(v)) => format!("{:.2}", 100.0 * v),
        (_, None) => String::new(),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One CSV table per metric: rows are detectors, columns are datasets.
/// Effectiveness metrics are percentages; failed runs show `OOM` or `ERR`.
/// When a (detector, dataset) pair appears twice the later report wins.
pub fn report_tables(reports: &[EvalReport]) -> BTreeMap<String, String> {
    let detectors: BTreeSet<&str> = reports.iter().map(|r| r.detector_id.as_str()).collect();
    let datasets: BTreeSet<&str> = reports.iter().map(|r| r.dataset_id.as_str()).collect();
    let mut by_pair = BTreeMap::new();
    for r in reports {
        by_pair.insert((r.detector_id.as_str(), r.dataset_id.as_str()), r);
    }
    REPORT_METRICS
        .iter()
        .map(|&metric| {
            let mut out = String::from("detector");
            for ds in &datasets {
                out.push(',');
                out.push_str(&csv_field(ds));
            }
            out.push('\n');
            for det in &detectors {
                out.push_str(&csv_field(det));
                for ds in &datasets {
                    out.push(',');
                    if let Some(r) = by_pair.get(&(*det, *ds)) {
                        out.push_str(&cell(r, metric));
                    }
                }
                out.push('\n');
            }
            (metric.to_string(), out)
        })
        .collect()
}
