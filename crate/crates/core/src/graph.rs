//! Attributed graph in compressed sparse row form.

use ndarray::Array2;

use crate::error::{GadError, Result};

/// Undirected attributed graph. Adjacency is stored symmetrically: every
/// undirected edge `{u, v}` appears as `v` in row `u` and `u` in row `v`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributedGraph {
    row_offsets: Vec<usize>,
    col_indices: Vec<u32>,
    features: Array2<f32>,
}

/// Binary anomaly labels, `1` for anomalous nodes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeLabels {
    labels: Vec<u8>,
    anomaly_count: usize,
}

impl NodeLabels {
    pub fn new(labels: Vec<u8>) -> Result<Self> {
        if let Some(pos) = labels.iter().position(|&l| l > 1) {
            return Err(GadError::Data(format!(
                "label of node {pos} is {}, expected 0 or 1",
                labels[pos]
            )));
        }
        let anomaly_count = labels.iter().filter(|&&l| l == 1).count();
        Ok(Self {
            labels,
            anomaly_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.labels
    }

    pub fn is_anomaly(&self, node: usize) -> bool {
        self.labels[node] == 1
    }

    pub fn anomaly_count(&self) -> usize {
        self.anomaly_count
    }

    pub fn normal_count(&self) -> usize {
        self.labels.len() - self.anomaly_count
    }

    pub fn anomaly_ratio(&self) -> f64 {
        if self.labels.is_empty() {
            0.0
        } else {
            self.anomaly_count as f64 / self.labels.len() as f64
        }
    }

    /// Node ids with the given label, ascending.
    pub fn ids_with(&self, label: u8) -> Vec<u32> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == label)
            .map(|(i, _)| i as u32)
            .collect()
    }
}

/// Builds a clean undirected graph from an edge list.
///
/// Self-loops and duplicate edges are dropped and every edge is symmetrized.
/// Isolated nodes are kept; removing them is the job of preprocessing.
pub fn build_graph(
    edges: &[(u32, u32)],
    n: usize,
    features: Array2<f32>,
    labels: Vec<u8>,
) -> Result<(AttributedGraph, NodeLabels)> {
    if n > u32::MAX as usize {
        return Err(GadError::Argument(format!("node count {n} exceeds u32 ids")));
    }
    if features.nrows() != n {
        return Err(GadError::Shape(format!(
            "feature matrix has {} rows for {n} nodes",
            features.nrows()
        )));
    }
    if labels.len() != n {
        return Err(GadError::Shape(format!(
            "label array has {} entries for {n} nodes",
            labels.len()
        )));
    }
    let labels = NodeLabels::new(labels)?;

    let mut keys = Vec::with_capacity(edges.len() * 2);
    for &(u, v) in edges {
        if u as usize >= n || v as usize >= n {
            return Err(GadError::MalformedInput(format!(
                "edge ({u}, {v}) references a node id >= {n}"
            )));
        }
        if u != v {
            keys.push(((u as u64) << 32) | v as u64);
            keys.push(((v as u64) << 32) | u as u64);
        }
    }
    keys.sort_unstable();
    keys.dedup();

    let mut row_offsets = vec![0usize; n + 1];
    for &k in &keys {
        row_offsets[(k >> 32) as usize + 1] += 1;
    }
    for i in 0..n {
        row_offsets[i + 1] += row_offsets[i];
    }
    let col_indices = keys.iter().map(|&k| k as u32).collect();

    Ok((
        AttributedGraph {
            row_offsets,
            col_indices,
            features,
        },
        labels,
    ))
}

impl AttributedGraph {
    pub fn node_count(&self) -> usize {
        self.row_offsets.len() - 1
    }

    /// Undirected edge count.
    pub fn edge_count(&self) -> usize {
        self.col_indices.len() / 2
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[u32] {
        &self.col_indices
    }

    pub fn features(&self) -> &Array2<f32> {
        &self.features
    }

    pub fn into_features(self) -> Array2<f32> {
        self.features
    }

    pub fn neighbors(&self, node: usize) -> &[u32] {
        &self.col_indices[self.row_offsets[node]..self.row_offsets[node + 1]]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.row_offsets[node + 1] - self.row_offsets[node]
    }

    pub fn degree_sequence(&self) -> Vec<usize> {
        self.row_offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Each undirected edge once as `(u, v)` with `u < v`, in CSR order.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.node_count()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .filter(move |&&v| (u as u32) < v)
                .map(move |&v| (u as u32, v))
        })
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&(v as u32)).is_ok()
    }

    /// Same topology with a different feature matrix.
    pub fn with_features(&self, features: Array2<f32>) -> Result<AttributedGraph> {
        if features.nrows() != self.node_count() {
            return Err(GadError::Shape(format!(
                "feature matrix has {} rows for {} nodes",
                features.nrows(),
                self.node_count()
            )));
        }
        Ok(AttributedGraph {
            row_offsets: self.row_offsets.clone(),
            col_indices: self.col_indices.clone(),
            features,
        })
    }

    /// Checks every CSR invariant; used by tests and after transforms.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.node_count();
        if self.row_offsets[0] != 0 || self.row_offsets[n] != self.col_indices.len() {
            return Err(GadError::MalformedInput("row offsets do not span entries".into()));
        }
        for u in 0..n {
            if self.row_offsets[u] > self.row_offsets[u + 1] {
                return Err(GadError::MalformedInput(format!("row {u} offsets decrease")));
            }
            let row = self.neighbors(u);
            for (i, &v) in row.iter().enumerate() {
                if v as usize >= n {
                    return Err(GadError::MalformedInput(format!("row {u} has id {v}")));
                }
                if v as usize == u {
                    return Err(GadError::MalformedInput(format!("self-loop at {u}")));
                }
                if i > 0 && row[i - 1] >= v {
                    return Err(GadError::MalformedInput(format!("row {u} not strictly sorted")));
                }
                if !self.has_edge(v as usize, u) {
                    return Err(GadError::MalformedInput(format!("edge ({u}, {v}) not mirrored")));
                }
            }
        }
        Ok(())
    }
}

/// Degree of every node.
pub fn degree_sequence(g: &AttributedGraph) -> Vec<usize> {
    g.degree_sequence()
}
