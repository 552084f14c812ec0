//! Command-level pipelines. Each reads a dataset directory (or a raw
//! manifest), derives a variant, and records everything needed to
//! regenerate it in the variant's manifest.

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::dataset::{save_parts, Dataset, MANIFEST_FILE};
use crate::detectors::{score_mlpae, train_mlpae, AbortSignal, ScoreVector};
use crate::error::{GadError, Result};
use crate::eval::{run_benchmark, Budgets, DetectorSpec, EvalReport};
use crate::expand::{expand, validate_expansion, ExpansionValidation};
use crate::ingest::{parse_dataset, preprocess};
use crate::manifest::{sha256_file, Transform, VariantManifest};
use crate::metrics::{split_nodes, SplitSpec, DEFAULT_FRACTIONS};
use crate::missing::{generate_mask, impute, ImputeStrategy, MissingMask};
use crate::ratio::{adjust_ratio, RetentionKind, RetentionStrategy};

pub const DEFAULT_SEED: u64 = 20;

/// The fifteen-cell missingness grid.
pub const GRID_GAMMAS: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];

fn absolute(path: &Path) -> Result<PathBuf> {
    std::fs::canonicalize(path).map_err(|e| GadError::io(path, e))
}

fn input_of(manifest: &VariantManifest) -> Result<PathBuf> {
    manifest
        .input
        .as_ref()
        .map(PathBuf::from)
        .ok_or_else(|| GadError::MalformedInput("manifest has no input reference".into()))
}

/// Loads a dataset directory and returns it with its location and the
/// checksum of its manifest.
fn load_parent(dir: &Path) -> Result<(Dataset, String, String)> {
    let ds = Dataset::load(dir)?;
    let checksum = sha256_file(&dir.join(MANIFEST_FILE))?;
    let location = absolute(dir)?.to_string_lossy().into_owned();
    Ok((ds, location, checksum))
}

fn reject_mask(ds: &Dataset, what: &str) -> Result<()> {
    if ds.mask.is_some() {
        return Err(GadError::Argument(format!(
            "{what} expects a dataset without a missingness mask"
        )));
    }
    Ok(())
}

fn param_f64(m: &VariantManifest, key: &str) -> Result<f64> {
    m.get_param(key)?
        .as_f64()
        .ok_or_else(|| GadError::MalformedInput(format!("parameter {key:?} is not a number")))
}

fn param_u64(m: &VariantManifest, key: &str) -> Result<u64> {
    m.get_param(key)?
        .as_u64()
        .ok_or_else(|| GadError::MalformedInput(format!("parameter {key:?} is not an integer")))
}

fn param_str<'a>(m: &'a VariantManifest, key: &str) -> Result<&'a str> {
    m.get_param(key)?
        .as_str()
        .ok_or_else(|| GadError::MalformedInput(format!("parameter {key:?} is not a string")))
}

fn seed_of(m: &VariantManifest) -> Result<u64> {
    m.seed
        .ok_or_else(|| GadError::MalformedInput("stochastic variant lacks a seed".into()))
}

pub fn ingest(raw_manifest: &Path) -> Result<Dataset> {
    let raw = parse_dataset(raw_manifest)?;
    let (graph, labels, mut manifest) = preprocess(&raw)?;
    manifest.input = Some(absolute(raw_manifest)?.to_string_lossy().into_owned());
    manifest.parent_checksum = Some(sha256_file(raw_manifest)?);
    Ok(Dataset {
        graph,
        labels,
        mask: None,
        manifest,
    })
}

pub fn expand_variant(
    input: &Path,
    target_n: usize,
    k_candidates: &[usize],
    seed: u64,
) -> Result<(Dataset, ExpansionValidation)> {
    let (parent, location, checksum) = load_parent(input)?;
    reject_mask(&parent, "expand")?;
    let ex = expand(&parent.graph, &parent.labels, target_n, k_candidates, seed)?;
    let mut manifest = VariantManifest::new(parent.manifest.source_id.clone(), Transform::Expand)
        .param("target_n", target_n)
        .param("k_candidates", json!(k_candidates))
        .param("plan", serde_json::to_value(&ex.plan)?)
        .param("normal_components", ex.normal_components)
        .param("anomaly_components", json!(ex.anomaly_components))
        .with_seed(seed);
    manifest.input = Some(location);
    manifest.parent_checksum = Some(checksum);
    manifest.validation = Some(serde_json::to_value(&ex.validation)?);
    Ok((
        Dataset {
            graph: ex.graph,
            labels: ex.labels,
            mask: None,
            manifest,
        },
        ex.validation,
    ))
}

pub fn parse_retention(name: &str) -> Result<RetentionKind> {
    match name {
        "core" => Ok(RetentionKind::CoreCluster),
        "edge" => Ok(RetentionKind::EdgeCluster),
        "random" => Ok(RetentionKind::Random),
        other => Err(GadError::Argument(format!(
            "unknown retention strategy {other:?} (core, edge, random)"
        ))),
    }
}

pub fn retention_name(kind: RetentionKind) -> &'static str {
    match kind {
        RetentionKind::CoreCluster => "core",
        RetentionKind::EdgeCluster => "edge",
        RetentionKind::Random => "random",
    }
}

pub fn adjust_variant(
    input: &Path,
    target_ratio: f64,
    strategy: RetentionStrategy,
    seed: u64,
) -> Result<Dataset> {
    let (parent, location, checksum) = load_parent(input)?;
    reject_mask(&parent, "adjust-ratio")?;
    let adj = adjust_ratio(&parent.graph, &parent.labels, target_ratio, strategy, seed)?;
    let mut manifest =
        VariantManifest::new(parent.manifest.source_id.clone(), Transform::RatioAdjust)
            .param("target_ratio", target_ratio)
            .param("strategy", retention_name(strategy.kind))
            .param("cluster_k", strategy.cluster_k)
            .param("retained_count", adj.retained.len())
            .param("demoted_count", adj.demoted.len())
            .param("retained_checksum", adj.retained_checksum())
            .param("retained_ids", json!(adj.retained))
            .with_seed(seed);
    manifest.input = Some(location);
    manifest.parent_checksum = Some(checksum);
    Ok(Dataset {
        graph: parent.graph.with_features(adj.features)?,
        labels: adj.labels,
        mask: None,
        manifest,
    })
}

/// Masks cells at `(gamma0, gamma1)` and, when a strategy is given, fills
/// them. Without a strategy masked cells are stored as zero.
pub fn inject_variant(
    input: &Path,
    gamma0: f64,
    gamma1: f64,
    strategy: Option<ImputeStrategy>,
    seed: u64,
) -> Result<Dataset> {
    let (parent, location, checksum) = load_parent(input)?;
    reject_mask(&parent, "inject-missing")?;
    let d = parent.graph.dim();
    let mask = generate_mask(&parent.labels, gamma0, gamma1, d, seed)?;
    let features = match strategy {
        Some(s) => impute(parent.graph.features(), &mask, &parent.labels, &parent.graph, s)?,
        None => {
            let mut x = parent.graph.features().clone();
            for &(i, j) in mask.cells() {
                x[[i as usize, j as usize]] = 0.0;
            }
            x
        }
    };
    let mut manifest =
        VariantManifest::new(parent.manifest.source_id.clone(), Transform::InjectMissing)
            .param("gamma0", gamma0)
            .param("gamma1", gamma1)
            .param("realized_gamma0", mask.gamma0)
            .param("realized_gamma1", mask.gamma1)
            .param("masked_cells", mask.len())
            .param("strategy", strategy.map_or(Value::Null, |s| s.name().into()))
            .with_seed(seed);
    manifest.input = Some(location);
    manifest.parent_checksum = Some(checksum);
    Ok(Dataset {
        graph: parent.graph.with_features(features)?,
        labels: parent.labels,
        mask: Some(mask),
        manifest,
    })
}

pub fn impute_variant(input: &Path, strategy: ImputeStrategy) -> Result<Dataset> {
    let (parent, location, checksum) = load_parent(input)?;
    let mask: MissingMask = parent
        .mask
        .clone()
        .ok_or_else(|| GadError::Argument("impute needs a dataset with a mask".into()))?;
    let features = impute(parent.graph.features(), &mask, &parent.labels, &parent.graph, strategy)?;
    let mut manifest = VariantManifest::new(parent.manifest.source_id.clone(), Transform::Impute)
        .param("strategy", strategy.name());
    manifest.input = Some(location);
    manifest.parent_checksum = Some(checksum);
    Ok(Dataset {
        graph: parent.graph.with_features(features)?,
        labels: parent.labels,
        mask: Some(mask),
        manifest,
    })
}

/// Directory name of one grid cell, e.g. `gamma0.10_mean`.
pub fn grid_cell_name(gamma: f64, strategy: Option<ImputeStrategy>) -> String {
    match strategy {
        Some(s) => format!("gamma{gamma:.2}_{}", s.name()),
        None => format!("gamma{gamma:.2}"),
    }
}

/// Writes one variant per (gamma, strategy) pair under `out_root`. An
/// empty strategy list writes masked-only variants. `gamma1` overrides the
/// anomaly-class ratio; by default both classes share `gamma`.
pub fn inject_grid(
    input: &Path,
    out_root: &Path,
    gammas: &[f64],
    gamma1: Option<f64>,
    strategies: &[ImputeStrategy],
    seed: u64,
) -> Result<Vec<(PathBuf, VariantManifest)>> {
    let choices: Vec<Option<ImputeStrategy>> = if strategies.is_empty() {
        vec![None]
    } else {
        strategies.iter().copied().map(Some).collect()
    };
    let mut out = Vec::new();
    for &gamma in gammas {
        for &s in &choices {
            let ds = inject_variant(input, gamma, gamma1.unwrap_or(gamma), s, seed)?;
            let dir = out_root.join(grid_cell_name(gamma, s));
            let m = save_variant(&ds, &dir)?;
            out.push((dir, m));
        }
    }
    Ok(out)
}

/// Regenerates a variant from its manifest alone.
pub fn regenerate(manifest: &VariantManifest) -> Result<Dataset> {
    let input = input_of(manifest)?;
    let ds = match manifest.transform {
        Transform::Ingest => ingest(&input)?,
        Transform::Expand => {
            let ks: Vec<usize> = serde_json::from_value(manifest.get_param("k_candidates")?.clone())?;
            let target_n = param_u64(manifest, "target_n")? as usize;
            expand_variant(&input, target_n, &ks, seed_of(manifest)?)?.0
        }
        Transform::RatioAdjust => {
            let strategy = RetentionStrategy {
                kind: parse_retention(param_str(manifest, "strategy")?)?,
                cluster_k: param_u64(manifest, "cluster_k")? as usize,
            };
            adjust_variant(&input, param_f64(manifest, "target_ratio")?, strategy, seed_of(manifest)?)?
        }
        Transform::InjectMissing => {
            let strategy = match manifest.get_param("strategy")? {
                Value::Null => None,
                Value::String(s) => Some(ImputeStrategy::parse(s)?),
                _ => return Err(GadError::MalformedInput("bad strategy parameter".into())),
            };
            inject_variant(
                &input,
                param_f64(manifest, "gamma0")?,
                param_f64(manifest, "gamma1")?,
                strategy,
                seed_of(manifest)?,
            )?
        }
        Transform::Impute => impute_variant(&input, ImputeStrategy::parse(param_str(manifest, "strategy")?)?)?,
    };
    if ds.manifest.parent_checksum != manifest.parent_checksum {
        return Err(GadError::Consistency(
            "input changed since this variant was produced".into(),
        ));
    }
    Ok(ds)
}

/// Regenerates the variant stored in `dir` into `scratch` and returns the
/// names of artifact files whose checksums differ from the stored manifest.
pub fn replay(dir: &Path, scratch: &Path) -> Result<Vec<String>> {
    let manifest = VariantManifest::read(&dir.join(MANIFEST_FILE))?;
    let regenerated = regenerate(&manifest)?.save(scratch)?;
    let mut differing: Vec<String> = manifest
        .content_checksums
        .iter()
        .filter(|(f, c)| regenerated.content_checksums.get(*f) != Some(*c))
        .map(|(f, _)| f.clone())
        .collect();
    differing.extend(
        regenerated
            .content_checksums
            .keys()
            .filter(|f| !manifest.content_checksums.contains_key(*f))
            .cloned(),
    );
    Ok(differing)
}

/// Re-runs the expansion checks of an expanded variant against its parent.
pub fn validate_variant(dir: &Path) -> Result<ExpansionValidation> {
    let expanded = Dataset::load(dir)?;
    if expanded.manifest.transform != Transform::Expand {
        return Err(GadError::Argument(format!(
            "{} is not an expanded variant",
            dir.display()
        )));
    }
    let parent_dir = input_of(&expanded.manifest)?;
    let (parent, _, checksum) = load_parent(&parent_dir)?;
    if Some(&checksum) != expanded.manifest.parent_checksum.as_ref() {
        return Err(GadError::Consistency(format!(
            "parent {} changed since expansion",
            parent_dir.display()
        )));
    }
    validate_expansion(&parent.graph, &parent.labels, &expanded.graph, &expanded.labels)
}

pub fn default_split(ds: &Dataset, seed: u64) -> Result<SplitSpec> {
    split_nodes(ds.graph.node_count(), &ds.labels, DEFAULT_FRACTIONS, true, seed)
}

/// Scores every node of a dataset. MLPAE trains on the default split and
/// optionally writes its weights.
pub fn score_dataset(
    ds: &Dataset,
    detector: &DetectorSpec,
    seed: u64,
    checkpoint: Option<&Path>,
) -> Result<ScoreVector> {
    let split = default_split(ds, seed)?;
    let abort = AbortSignal::new();
    match (detector, checkpoint) {
        (DetectorSpec::Mlpae(cfg), Some(path)) => {
            let f = ds.graph.features();
            let model = train_mlpae(f, &split.train_ids, &split.val_ids, cfg, &abort)?;
            std::fs::write(path, model.encode_checkpoint()).map_err(|e| GadError::io(path, e))?;
            score_mlpae(&model, f)
        }
        _ => detector.score(&ds.graph, &split, &abort),
    }
}

pub fn evaluate_dataset(
    dir: &Path,
    detector: &DetectorSpec,
    budgets: &Budgets,
    seed: u64,
) -> Result<EvalReport> {
    let ds = Dataset::load(dir)?;
    let split = default_split(&ds, seed)?;
    let manifest_ref = format!(
        "{}#sha256:{}",
        absolute(dir)?.join(MANIFEST_FILE).display(),
        sha256_file(&dir.join(MANIFEST_FILE))?
    );
    let dataset_id = absolute(dir)?
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| ds.manifest.source_id.clone());
    Ok(run_benchmark(
        &ds.graph,
        &ds.labels,
        &dataset_id,
        &manifest_ref,
        detector,
        &split,
        budgets,
    ))
}

/// Saves a dataset, refusing to overwrite a directory that holds anything
/// other than a previous variant.
pub fn save_variant(ds: &Dataset, out: &Path) -> Result<VariantManifest> {
    if out.exists() {
        let foreign = std::fs::read_dir(out)
            .map_err(|e| GadError::io(out, e))?
            .filter_map(|e| e.ok())
            .any(|e| {
                let name = e.file_name();
                let name = name.to_string_lossy();
                !matches!(
                    name.as_ref(),
                    "edges.tsv" | "features.bin" | "labels.tsv" | "mask.bin" | "manifest.json"
                )
            });
        if foreign {
            return Err(GadError::Argument(format!(
                "{} exists and is not a dataset directory",
                out.display()
            )));
        }
    }
    save_parts(out, &ds.graph, &ds.labels, ds.mask.as_ref(), ds.manifest.clone())
}
