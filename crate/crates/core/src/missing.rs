//! Category-conditioned missingness masks and the mean / median / neighbour
//! fills.
//!
//! Mask file: `GADM`, u32 cell count, then `(u32 node, u32 dim)` pairs,
//! little-endian, sorted lexicographically.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GadError, Result};
use crate::graph::{AttributedGraph, NodeLabels};
use crate::rng::Stream;

pub const MASK_MAGIC: &[u8; 4] = b"GADM";

#[derive(Clone, Debug, PartialEq)]
pub struct MissingMask {
    cells: Vec<(u32, u32)>,
    pub gamma0: f64,
    pub gamma1: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputeStrategy {
    Mean,
    Median,
    Neighbor,
}

impl ImputeStrategy {
    pub const ALL: [ImputeStrategy; 3] =
        [ImputeStrategy::Mean, ImputeStrategy::Median, ImputeStrategy::Neighbor];

    pub fn name(self) -> &'static str {
        match self {
            ImputeStrategy::Mean => "mean",
            ImputeStrategy::Median => "median",
            ImputeStrategy::Neighbor => "neighbor",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(ImputeStrategy::Mean),
            "median" => Ok(ImputeStrategy::Median),
            "neighbor" | "neighbour" => Ok(ImputeStrategy::Neighbor),
            other => Err(GadError::Argument(format!("unknown impute strategy {other:?}"))),
        }
    }
}

fn realized_gammas(cells: &[(u32, u32)], labels: &NodeLabels, d: usize) -> (f64, f64) {
    let mut count = [0usize; 2];
    for &(i, _) in cells {
        count[labels.as_slice()[i as usize] as usize] += 1;
    }
    let ratio = |c: usize, size: usize| {
        if size == 0 || d == 0 {
            0.0
        } else {
            c as f64 / (size * d) as f64
        }
    };
    (
        ratio(count[0], labels.normal_count()),
        ratio(count[1], labels.anomaly_count()),
    )
}

impl MissingMask {
    pub fn cells(&self) -> &[(u32, u32)] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Row-major `n x d` indicator, `true` where the cell is missing.
    pub fn dense(&self, n: usize, d: usize) -> Vec<bool> {
        let mut m = vec![false; n * d];
        for &(i, j) in &self.cells {
            m[i as usize * d + j as usize] = true;
        }
        m
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(8 + self.cells.len() * 8);
        buf.extend_from_slice(MASK_MAGIC);
        buf.extend_from_slice(&(self.cells.len() as u32).to_le_bytes());
        for &(i, j) in &self.cells {
            buf.extend_from_slice(&i.to_le_bytes());
            buf.extend_from_slice(&j.to_le_bytes());
        }
        buf
    }

    pub fn decode(bytes: &[u8], labels: &NodeLabels, d: usize) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..4] != MASK_MAGIC {
            return Err(GadError::MalformedInput("mask file lacks GADM header".into()));
        }
        let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let count = word(4) as usize;
        if bytes.len() != 8 + count * 8 {
            return Err(GadError::Shape(format!(
                "mask declares {count} cells but holds {} bytes",
                bytes.len() - 8
            )));
        }
        let cells: Vec<(u32, u32)> = (0..count).map(|c| (word(8 + c * 8), word(12 + c * 8))).collect();
        if cells.windows(2).any(|w| w[0] >= w[1]) {
            return Err(GadError::MalformedInput("mask cells not strictly sorted".into()));
        }
        if let Some(&(i, j)) = cells
            .iter()
            .find(|&&(i, j)| i as usize >= labels.len() || j as usize >= d)
        {
            return Err(GadError::Shape(format!("mask cell ({i}, {j}) out of bounds")));
        }
        let (gamma0, gamma1) = realized_gammas(&cells, labels, d);
        Ok(MissingMask {
            cells,
            gamma0,
            gamma1,
        })
    }
}

/// Exactly `round(gamma_c * |V_c| * d)` distinct cells per category, drawn
/// uniformly without replacement.
pub fn generate_mask(
    labels: &NodeLabels,
    gamma0: f64,
    gamma1: f64,
    d: usize,
    seed: u64,
) -> Result<MissingMask> {
    for g in [gamma0, gamma1] {
        if !(0.0..=1.0).contains(&g) {
            return Err(GadError::Argument(format!("missing ratio {g} not in [0, 1]")));
        }
    }
    let mut cells = Vec::new();
    for (class, gamma) in [(0u8, gamma0), (1u8, gamma1)] {
        let ids = labels.ids_with(class);
        let total = ids.len() * d;
        let take = (gamma * total as f64).round() as usize;
        if take == 0 {
            continue;
        }
        let mut rng = Stream::new(seed, "missing-mask", class as u64);
        for cell in rand::seq::index::sample(&mut rng, total, take) {
            cells.push((ids[cell / d], (cell % d) as u32));
        }
    }
    cells.sort_unstable();
    let (gamma0, gamma1) = realized_gammas(&cells, labels, d);
    Ok(MissingMask {
        cells,
        gamma0,
        gamma1,
    })
}

/// Per-class, per-dimension statistic over observed cells; `None` when a
/// class has no observed value in that dimension.
fn class_stats(
    features: &Array2<f32>,
    missing: &[bool],
    labels: &NodeLabels,
    median: bool,
) -> Vec<[Option<f64>; 2]> {
    let (n, d) = features.dim();
    (0..d)
        .into_par_iter()
        .map(|j| {
            let mut vals: [Vec<f64>; 2] = Default::default();
            for i in 0..n {
                if !missing[i * d + j] {
                    vals[labels.as_slice()[i] as usize].push(features[[i, j]] as f64);
                }
            }
            let stat = |v: &mut Vec<f64>| -> Option<f64> {
                if v.is_empty() {
                    return None;
                }
                if median {
                    v.sort_unstable_by(f64::total_cmp);
                    let m = v.len();
                    Some(if m % 2 == 1 {
                        v[m / 2]
                    } else {
                        0.5 * (v[m / 2 - 1] + v[m / 2])
                    })
                } else {
                    Some(v.iter().sum::<f64>() / v.len() as f64)
                }
            };
            let [a, b] = &mut vals;
            [stat(a), stat(b)]
        })
        .collect()
}

/// Fills masked cells; unmasked cells are copied bit-for-bit. Statistics
/// use observed cells and true category labels only.
pub fn impute(
    features: &Array2<f32>,
    mask: &MissingMask,
    labels: &NodeLabels,
    g: &AttributedGraph,
    strategy: ImputeStrategy,
) -> Result<Array2<f32>> {
    let (n, d) = features.dim();
    if labels.len() != n || g.node_count() != n {
        return Err(GadError::Shape("features, labels and graph disagree on n".into()));
    }
    if let Some(&(i, j)) = mask
        .cells
        .iter()
        .find(|&&(i, j)| i as usize >= n || j as usize >= d)
    {
        return Err(GadError::Shape(format!("mask cell ({i}, {j}) out of bounds")));
    }
    let missing = mask.dense(n, d);
    let stats = class_stats(features, &missing, labels, strategy == ImputeStrategy::Median);
    let fallback = |i: usize, j: usize| -> Result<f64> {
        let class = labels.as_slice()[i];
        stats[j][class as usize].ok_or(GadError::DegenerateColumn {
            dim: j,
            category: class,
        })
    };

    let fills: Vec<f64> = mask
        .cells
        .par_iter()
        .map(|&(i, j)| {
            let (i, j) = (i as usize, j as usize);
            match strategy {
                ImputeStrategy::Mean | ImputeStrategy::Median => fallback(i, j),
                ImputeStrategy::Neighbor => {
                    let class = labels.as_slice()[i];
                    let (mut sum, mut count) = (0.0f64, 0usize);
                    for &u in g.neighbors(i) {
                        let u = u as usize;
                        if labels.as_slice()[u] == class && !missing[u * d + j] {
                            sum += features[[u, j]] as f64;
                            count += 1;
                        }
                    }
                    if count > 0 {
                        Ok(sum / count as f64)
                    } else {
                        fallback(i, j)
                    }
                }
            }
        })
        .collect::<Result<_>>()?;

    let mut out = features.clone();
    for (&(i, j), v) in mask.cells.iter().zip(fills) {
        out[[i as usize, j as usize]] = v as f32;
    }
    Ok(out)
}
