//! Raw dataset parsing and the standard cleaning pipeline: structural
//! cleanup, isolated-node removal with id compaction, label consistency and
//! per-dimension min-max scaling to f32.

use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{GadError, Result};
use crate::graph::{build_graph, AttributedGraph, NodeLabels};
use crate::io;
use crate::manifest::{Transform, VariantManifest};

/// JSON document describing a raw dataset. Paths are relative to the
/// document's own directory unless absolute.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RawManifest {
    pub source_id: String,
    pub edges: PathBuf,
    pub features: PathBuf,
    pub labels: PathBuf,
    pub n: usize,
    pub d: usize,
}

#[derive(Clone, Debug)]
pub struct RawDataset {
    pub source_id: String,
    pub edge_path: PathBuf,
    pub feature_path: PathBuf,
    pub label_path: PathBuf,
    pub declared_n: usize,
    pub declared_d: usize,
    edges: Vec<(u32, u32)>,
    features: Array2<f32>,
    labels: Vec<u8>,
}

pub fn parse_dataset(manifest_path: &Path) -> Result<RawDataset> {
    let text =
        std::fs::read_to_string(manifest_path).map_err(|e| GadError::io(manifest_path, e))?;
    let raw: RawManifest = serde_json::from_str(&text)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    let (edge_path, feature_path, label_path) =
        (resolve(&raw.edges), resolve(&raw.features), resolve(&raw.labels));

    let features = io::read_features(&feature_path)?;
    if features.dim() != (raw.n, raw.d) {
        return Err(GadError::Shape(format!(
            "features are {}x{}, manifest declares {}x{}",
            features.nrows(),
            features.ncols(),
            raw.n,
            raw.d
        )));
    }
    let labels = io::read_labels(&label_path, raw.n)?;
    let edges = io::read_edge_list(&edge_path)?;
    if let Some(&(u, v)) = edges
        .iter()
        .find(|&&(u, v)| u as usize >= raw.n || v as usize >= raw.n)
    {
        return Err(GadError::MalformedInput(format!(
            "edge ({u}, {v}) outside declared n={}",
            raw.n
        )));
    }
    Ok(RawDataset {
        source_id: raw.source_id,
        edge_path,
        feature_path,
        label_path,
        declared_n: raw.n,
        declared_d: raw.d,
        edges,
        features,
        labels,
    })
}

/// Cleans a parsed dataset. The manifest records the id remap
/// (`node_remap[new_id] = original_id`) and removal counts.
pub fn preprocess(raw: &RawDataset) -> Result<(AttributedGraph, NodeLabels, VariantManifest)> {
    let (g, labels, stats) = clean(&raw.edges, raw.features.clone(), raw.labels.clone())?;
    let manifest = VariantManifest::new(raw.source_id.clone(), Transform::Ingest)
        .param("declared_n", raw.declared_n)
        .param("declared_d", raw.declared_d)
        .param("input_edge_rows", raw.edges.len())
        .param("isolated_removed", stats.isolated_removed)
        .param("normalization", "minmax per dimension after isolated-node removal")
        .param("node_remap", json!(stats.node_remap));
    Ok((g, labels, manifest))
}

pub struct CleanStats {
    pub isolated_removed: usize,
    pub node_remap: Vec<u32>,
}

/// Structural cleanup, isolated-node removal and normalization on in-memory
/// parts.
pub fn clean(
    edges: &[(u32, u32)],
    features: Array2<f32>,
    labels: Vec<u8>,
) -> Result<(AttributedGraph, NodeLabels, CleanStats)> {
    check_finite(&features)?;
    let n = features.nrows();
    let (g, _) = build_graph(edges, n, Array2::zeros((n, 0)), labels.clone())?;

    let kept: Vec<u32> = (0..n).filter(|&i| g.degree(i) > 0).map(|i| i as u32).collect();
    let mut new_id = vec![u32::MAX; n];
    for (new, &old) in kept.iter().enumerate() {
        new_id[old as usize] = new as u32;
    }
    let compact_edges: Vec<(u32, u32)> = g
        .edges()
        .map(|(u, v)| (new_id[u as usize], new_id[v as usize]))
        .collect();
    let rows: Vec<usize> = kept.iter().map(|&i| i as usize).collect();
    let kept_features = features.select(Axis(0), &rows);
    let kept_labels = rows.iter().map(|&i| labels[i]).collect();

    let normalized = minmax_normalize(&kept_features)?;
    let (graph, node_labels) = build_graph(&compact_edges, kept.len(), normalized, kept_labels)?;
    Ok((
        graph,
        node_labels,
        CleanStats {
            isolated_removed: n - kept.len(),
            node_remap: kept,
        },
    ))
}

fn check_finite(features: &Array2<f32>) -> Result<()> {
    if let Some(pos) = features.iter().position(|x| !x.is_finite()) {
        let d = features.ncols().max(1);
        return Err(GadError::Data(format!(
            "non-finite feature at row {}, dim {}",
            pos / d,
            pos % d
        )));
    }
    Ok(())
}

/// Maps every column to `[0, 1]`; constant columns become zero.
pub fn minmax_normalize(features: &Array2<f32>) -> Result<Array2<f32>> {
    check_finite(features)?;
    let d = features.ncols();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for row in features.rows() {
        for (j, &x) in row.iter().enumerate() {
            lo[j] = lo[j].min(x as f64);
            hi[j] = hi[j].max(x as f64);
        }
    }
    let mut out = features.clone();
    for mut row in out.rows_mut() {
        for (j, x) in row.iter_mut().enumerate() {
            let range = hi[j] - lo[j];
            *x = if range > 0.0 {
                ((*x as f64 - lo[j]) / range) as f32
            } else {
                0.0
            };
        }
    }
    Ok(out)
}
