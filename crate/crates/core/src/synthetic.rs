//! Seeded synthetic attributed graphs with a heavy-tailed Chung-Lu topology
//! and class-conditional Gaussian-mixture attributes.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GadError, Result};
use crate::graph::{build_graph, AttributedGraph, NodeLabels};
use crate::ingest::RawManifest;
use crate::io;
use crate::rng::Stream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n: usize,
    pub d: usize,
    pub anomaly_ratio: f64,
    /// Target mean degree; the edge count is `round(n * mean_degree / 2)`.
    pub mean_degree: f64,
    /// Power-law exponent of the expected degree sequence.
    pub degree_exponent: f64,
    pub normal_components: usize,
    pub anomaly_components: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            d: 16,
            anomaly_ratio: 0.05,
            mean_degree: 20.0,
            degree_exponent: 2.5,
            normal_components: 3,
            anomaly_components: 2,
            seed: 20,
        }
    }
}

struct Mixture {
    means: Vec<Vec<f64>>,
    sd: f64,
}

fn mixture(d: usize, k: usize, lo: f64, hi: f64, sd: f64, rng: &mut Stream) -> Mixture {
    let means = (0..k)
        .map(|_| (0..d).map(|_| lo + (hi - lo) * rng.next_f64()).collect())
        .collect();
    Mixture { means, sd }
}

/// Expected-degree weights `(i + i0)^(-1/(gamma-1))`, scaled to the target
/// mean and assigned to nodes in random order.
fn chung_lu_weights(cfg: &SyntheticConfig, rng: &mut Stream) -> Vec<f64> {
    let n = cfg.n;
    let i0 = (n as f64 / 20.0).max(1.0);
    let exp = -1.0 / (cfg.degree_exponent - 1.0);
    let mut w: Vec<f64> = (0..n).map(|i| (i as f64 + i0).powf(exp)).collect();
    let mean = w.iter().sum::<f64>() / n as f64;
    w.iter_mut().for_each(|x| *x *= cfg.mean_degree / mean);
    rng.shuffle(&mut w);
    w
}

fn chung_lu_edges(weights: &[f64], m: usize, rng: &mut Stream) -> Vec<(u32, u32)> {
    let n = weights.len();
    let mut cdf = Vec::with_capacity(n);
    let mut acc = 0.0;
    for &w in weights {
        acc += w;
        cdf.push(acc);
    }
    let pick = |rng: &mut Stream| {
        let t = rng.next_f64() * acc;
        cdf.partition_point(|&c| c <= t).min(n - 1) as u32
    };
    let mut seen = HashSet::with_capacity(m);
    let mut edges = Vec::with_capacity(m);
    let mut attempts = 0usize;
    while edges.len() < m && attempts < 20 * m.max(1) {
        attempts += 1;
        let (u, v) = (pick(rng), pick(rng));
        if u == v {
            continue;
        }
        let key = ((u.min(v) as u64) << 32) | u.max(v) as u64;
        if seen.insert(key) {
            edges.push((u, v));
        }
    }
    // attach any isolated node to a degree-proportional partner
    let mut deg = vec![0usize; n];
    for &(u, v) in &edges {
        deg[u as usize] += 1;
        deg[v as usize] += 1;
    }
    for i in 0..n as u32 {
        if deg[i as usize] == 0 && n > 1 {
            let mut v = pick(rng);
            while v == i {
                v = pick(rng);
            }
            edges.push((i, v));
            deg[i as usize] += 1;
            deg[v as usize] += 1;
        }
    }
    edges
}

/// Edge list, attribute rows and labels.
pub type RawParts = (Vec<(u32, u32)>, Array2<f32>, Vec<u8>);

/// Edges, attribute rows in `[0, 1]` and labels, before any cleaning.
pub fn generate_parts(cfg: &SyntheticConfig) -> Result<RawParts> {
    if cfg.n < 2 || cfg.d == 0 {
        return Err(GadError::Argument("synthetic graph needs n >= 2 and d >= 1".into()));
    }
    if !(0.0..1.0).contains(&cfg.anomaly_ratio) || cfg.mean_degree <= 0.0 {
        return Err(GadError::Argument("invalid anomaly ratio or mean degree".into()));
    }
    if cfg.degree_exponent <= 1.0 || cfg.normal_components == 0 || cfg.anomaly_components == 0 {
        return Err(GadError::Argument("invalid degree exponent or component count".into()));
    }
    let n = cfg.n;
    let mut rng = Stream::new(cfg.seed, "synthetic-topology", 0);
    let weights = chung_lu_weights(cfg, &mut rng);
    let m = (n as f64 * cfg.mean_degree / 2.0).round() as usize;
    let max_edges = n * (n - 1) / 2;
    let edges = chung_lu_edges(&weights, m.min(max_edges), &mut rng);

    let anomalies = (cfg.anomaly_ratio * n as f64).round() as usize;
    let mut labels = vec![0u8; n];
    let mut rng = Stream::new(cfg.seed, "synthetic-labels", 0);
    for i in rand::seq::index::sample(&mut rng, n, anomalies) {
        labels[i] = 1;
    }

    let mut rng = Stream::new(cfg.seed, "synthetic-mixtures", 0);
    let classes = [
        mixture(cfg.d, cfg.normal_components, 0.3, 0.7, 0.06, &mut rng),
        mixture(cfg.d, cfg.anomaly_components, 0.1, 0.9, 0.12, &mut rng),
    ];
    let row_stream = Stream::new(cfg.seed, "synthetic-rows", 0);
    let mut features = Array2::<f32>::zeros((n, cfg.d));
    features
        .as_slice_mut()
        .expect("fresh array is contiguous")
        .par_chunks_mut(cfg.d)
        .enumerate()
        .for_each(|(i, row)| {
            let mut rng = row_stream.derive(i as u64);
            let mix = &classes[labels[i] as usize];
            let c = rng.below(mix.means.len() as u64) as usize;
            for (x, &mu) in row.iter_mut().zip(&mix.means[c]) {
                let z: f64 = StandardNormal.sample(&mut rng);
                *x = (mu + mix.sd * z).clamp(0.0, 1.0) as f32;
            }
        });
    Ok((edges, features, labels))
}

/// A ready-to-use synthetic graph. Every node has degree at least one and
/// every attribute lies in `[0, 1]`.
pub fn generate(cfg: &SyntheticConfig) -> Result<(AttributedGraph, NodeLabels)> {
    let (edges, features, labels) = generate_parts(cfg)?;
    build_graph(&edges, cfg.n, features, labels)
}

/// Writes a raw dataset (edge list, feature matrix, labels and a raw
/// manifest named `raw.json`) suitable for `ingest`. Returns the manifest
/// path.
pub fn write_raw(cfg: &SyntheticConfig, source_id: &str, dir: &Path) -> Result<PathBuf> {
    let (edges, features, labels) = generate_parts(cfg)?;
    std::fs::create_dir_all(dir).map_err(|e| GadError::io(dir, e))?;
    let edge_path = dir.join("edges.txt");
    let text: String = edges.iter().map(|(u, v)| format!("{u} {v}\n")).collect();
    std::fs::write(&edge_path, text).map_err(|e| GadError::io(&edge_path, e))?;
    io::write_features(&dir.join("features.bin"), &features)?;
    io::write_labels(&dir.join("labels.tsv"), &labels)?;
    let manifest = RawManifest {
        source_id: source_id.to_string(),
        edges: "edges.txt".into(),
        features: "features.bin".into(),
        labels: "labels.tsv".into(),
        n: cfg.n,
        d: cfg.d,
    };
    let path = dir.join("raw.json");
    let json = serde_json::to_string_pretty(&manifest)? + "\n";
    std::fs::write(&path, json).map_err(|e| GadError::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_seed_graph_shape() {
        let (g, l) = generate(&SyntheticConfig::default()).unwrap();
        assert_eq!(g.node_count(), 2000);
        assert_eq!(g.dim(), 16);
        assert_eq!(l.anomaly_count(), 100);
        assert!((0..2000).all(|i| g.degree(i) > 0));
        let ratio = g.edge_count() as f64 / 2000.0;
        assert!((9.0..=11.0).contains(&ratio), "e/n = {ratio}");
        assert!(g.features().iter().all(|&x| (0.0..=1.0).contains(&x)));
        let max_deg = g.degree_sequence().into_iter().max().unwrap();
        assert!(max_deg > 40, "degree tail too light: {max_deg}");
    }

    #[test]
    fn deterministic() {
        let cfg = SyntheticConfig {
            n: 300,
            ..Default::default()
        };
        assert_eq!(generate_parts(&cfg).unwrap(), generate_parts(&cfg).unwrap());
    }
}
