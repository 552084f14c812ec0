//! Topology-only reference scorer: robust z-score of `log(1 + degree)`.

use crate::error::{GadError, Result};
use crate::graph::AttributedGraph;
use crate::stats::ks::median;

use super::ScoreVector;

/// `|log(1 + deg) - median| / MAD`. When the MAD is zero but the deviations
/// are not all zero (e.g. a star), the mean absolute deviation is used as
/// the scale instead; when every deviation is zero all scores are zero.
pub fn score_degree(g: &AttributedGraph) -> Result<ScoreVector> {
    let n = g.node_count();
    if n == 0 {
        return Err(GadError::Argument("cannot score an empty graph".into()));
    }
    let x: Vec<f64> = g
        .degree_sequence()
        .iter()
        .map(|&d| (1.0 + d as f64).ln())
        .collect();
    let med = median(&x);
    let dev: Vec<f64> = x.iter().map(|v| (v - med).abs()).collect();
    let mut scale = median(&dev);
    if scale == 0.0 {
        scale = dev.iter().sum::<f64>() / n as f64;
    }
    let scores = if scale == 0.0 {
        vec![0.0; n]
    } else {
        dev.iter().map(|d| d / scale).collect()
    };
    ScoreVector::new("degree", scores)
}
