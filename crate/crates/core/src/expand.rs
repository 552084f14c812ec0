//! Scale expansion.
//!
//! The original graph is kept verbatim. New nodes get attributes from
//! per-class Gaussian mixtures and degrees copied from the original degree
//! distribution; their edges are realised by degree-proportional stub
//! pairing inside a core/middle/edge stratification whose mixing matrix is
//! measured on the original edges.

use std::collections::HashSet;

use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{GadError, Result};
use crate::graph::{build_graph, AttributedGraph, NodeLabels};
use crate::rng::Stream;
use crate::stats::gmm::{fit_gmm, sample_gmm_unit_f32, GmmModel};
use crate::stats::ks::{ks_matrix, ks_two_sample, KsMatrixReport, KsResult, KS_ALPHA};

pub const CORE: usize = 0;
pub const MIDDLE: usize = 1;
pub const EDGE: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionPlan {
    pub original_n: usize,
    pub original_edges: usize,
    pub original_anomalies: usize,
    pub target_n: usize,
    pub new_nodes: usize,
    pub new_anomalies: usize,
    pub new_normals: usize,
    pub target_edges: usize,
    /// Degree values at the 50th and 90th percentile of the original graph.
    pub strata_thresholds: (usize, usize),
    /// `[a][b]`: share of directed adjacency entries running from stratum
    /// `a` to stratum `b` (core, middle, edge). Symmetric, sums to one.
    pub inter_stratum_edge_fractions: [[f64; 3]; 3],
}

impl ExpansionPlan {
    pub fn stratum(&self, degree: usize) -> usize {
        let (p50, p90) = self.strata_thresholds;
        if degree >= p90 {
            CORE
        } else if degree >= p50 {
            MIDDLE
        } else {
            EDGE
        }
    }
}

/// `round(a * b / c)` with halves rounded up, exact in integers.
fn round_ratio(a: usize, b: usize, c: usize) -> usize {
    ((2 * a as u128 * b as u128 + c as u128) / (2 * c as u128)) as usize
}

/// Nearest-rank percentile of an ascending slice.
fn percentile(sorted: &[usize], p: f64) -> usize {
    let rank = (p * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

pub fn plan_expansion(
    g: &AttributedGraph,
    labels: &NodeLabels,
    target_n: usize,
) -> Result<ExpansionPlan> {
    let n = g.node_count();
    if n == 0 {
        return Err(GadError::Argument("cannot expand an empty graph".into()));
    }
    if target_n < n {
        return Err(GadError::Argument(format!(
            "target_n {target_n} is below the current node count {n}"
        )));
    }
    let e = g.edge_count();
    let a = labels.anomaly_count();
    let total_anomalies = round_ratio(target_n, a, n);
    let new_nodes = target_n - n;
    let new_anomalies = total_anomalies - a;

    let degrees = g.degree_sequence();
    let mut sorted = degrees.clone();
    sorted.sort_unstable();
    let thresholds = (percentile(&sorted, 0.5), percentile(&sorted, 0.9));

    let mut plan = ExpansionPlan {
        original_n: n,
        original_edges: e,
        original_anomalies: a,
        target_n,
        new_nodes,
        new_anomalies,
        new_normals: new_nodes - new_anomalies,
        target_edges: round_ratio(target_n, e, n),
        strata_thresholds: thresholds,
        inter_stratum_edge_fractions: [[0.0; 3]; 3],
    };
    let mut counts = [[0usize; 3]; 3];
    for u in 0..n {
        let su = plan.stratum(degrees[u]);
        for &v in g.neighbors(u) {
            counts[su][plan.stratum(degrees[v as usize])] += 1;
        }
    }
    let total = (2 * e).max(1) as f64;
    for a in 0..3 {
        for b in 0..3 {
            plan.inter_stratum_edge_fractions[a][b] = counts[a][b] as f64 / total;
        }
    }
    Ok(plan)
}

/// New attribute rows (clamped to `[0, 1]`) and their labels, in a shuffled
/// order so labels are not clustered by id.
pub fn synthesize_attributes(
    plan: &ExpansionPlan,
    gmm_normal: &GmmModel,
    gmm_anomaly: Option<&GmmModel>,
    stream: &Stream,
) -> Result<(Array2<f32>, Vec<u8>)> {
    let normals = sample_gmm_unit_f32(gmm_normal, plan.new_normals, &stream.derive(0));
    let anomalies = match gmm_anomaly {
        Some(model) => sample_gmm_unit_f32(model, plan.new_anomalies, &stream.derive(1)),
        None if plan.new_anomalies == 0 => Array2::zeros((0, gmm_normal.dim())),
        None => {
            return Err(GadError::Argument(
                "plan needs anomalies but no anomaly model was fitted".into(),
            ))
        }
    };
    if anomalies.ncols() != normals.ncols() {
        return Err(GadError::Shape("class models disagree on dimension".into()));
    }
    let mut order: Vec<usize> = (0..plan.new_nodes).collect();
    stream.derive(2).shuffle(&mut order);
    let d = normals.ncols();
    let mut rows = Array2::<f32>::zeros((plan.new_nodes, d));
    let mut labels = vec![0u8; plan.new_nodes];
    for (slot, &src) in order.iter().enumerate() {
        if src < plan.new_normals {
            rows.row_mut(slot).assign(&normals.row(src));
        } else {
            rows.row_mut(slot).assign(&anomalies.row(src - plan.new_normals));
            labels[slot] = 1;
        }
    }
    Ok((rows, labels))
}

/// Target degrees for the new nodes: stratified draws from the original
/// degree distribution, shuffled, then nudged so the stub total is exactly
/// `2 * new_edges`.
fn target_degrees(
    original: &[usize],
    new_nodes: usize,
    new_edges: usize,
    rng: &mut Stream,
) -> Vec<usize> {
    if new_nodes == 0 {
        return Vec::new();
    }
    let mut sorted = original.to_vec();
    sorted.sort_unstable();
    let cap = new_nodes.saturating_sub(1);
    let mut deg: Vec<usize> = (0..new_nodes)
        .map(|j| {
            let q = (j as f64 + rng.next_f64()) / new_nodes as f64;
            let idx = ((q * sorted.len() as f64) as usize).min(sorted.len() - 1);
            sorted[idx].min(cap)
        })
        .collect();
    rng.shuffle(&mut deg);

    let want = 2 * new_edges;
    let mut have: usize = deg.iter().sum();
    let mut guard = 0usize;
    while have != want && guard < 100 * (want.abs_diff(have) + new_nodes) {
        guard += 1;
        let i = rng.below(new_nodes as u64) as usize;
        if have < want && deg[i] < cap {
            deg[i] += 1;
            have += 1;
        } else if have > want && deg[i] > 1 {
            deg[i] -= 1;
            have -= 1;
        }
    }
    deg
}

/// Expanded graph: original nodes and edges first and untouched, new nodes
/// appended as ids `n..target_n`.
pub fn construct_edges(
    plan: &ExpansionPlan,
    g: &AttributedGraph,
    labels: &NodeLabels,
    new_features: Array2<f32>,
    new_labels: &[u8],
    stream: &Stream,
) -> Result<(AttributedGraph, NodeLabels)> {
    let n = g.node_count();
    if plan.original_n != n || plan.original_edges != g.edge_count() {
        return Err(GadError::Argument("expansion plan was built for another graph".into()));
    }
    if new_features.nrows() != plan.new_nodes || new_labels.len() != plan.new_nodes {
        return Err(GadError::Shape(format!(
            "{} new rows / {} new labels for {} new nodes",
            new_features.nrows(),
            new_labels.len(),
            plan.new_nodes
        )));
    }
    let e = g.edge_count();
    let new_edges_needed = plan.target_edges.saturating_sub(e);
    let mut rng = stream.derive(0);
    let degrees = target_degrees(&g.degree_sequence(), plan.new_nodes, new_edges_needed, &mut rng);

    let mut stubs: [Vec<u32>; 3] = Default::default();
    for (j, &dg) in degrees.iter().enumerate() {
        let s = plan.stratum(dg);
        stubs[s].extend(std::iter::repeat_n((n + j) as u32, dg));
    }

    let mut rng = stream.derive(1);
    let mut seen: HashSet<u64> = HashSet::with_capacity(new_edges_needed);
    let mut new_edges: Vec<(u32, u32)> = Vec::with_capacity(new_edges_needed);
    let max_proposals = 10 * new_edges_needed.max(1);
    let mut proposals = 0usize;
    let mut streak = 0usize;
    let f = &plan.inter_stratum_edge_fractions;
    while new_edges.len() < new_edges_needed && proposals < max_proposals && streak < 100_000 {
        proposals += 1;
        let len = [stubs[0].len(), stubs[1].len(), stubs[2].len()];
        let pairs = |a: usize, b: usize| {
            if a == b {
                len[a] * len[a].saturating_sub(1)
            } else {
                len[a] * len[b]
            }
        };
        let mut w = [[0.0f64; 3]; 3];
        let mut total = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                if pairs(a, b) > 0 {
                    w[a][b] = f[a][b];
                    total += f[a][b];
                }
            }
        }
        if total <= 0.0 {
            // measured mixing has no mass on the remaining strata
            for a in 0..3 {
                for b in 0..3 {
                    w[a][b] = pairs(a, b) as f64;
                    total += w[a][b];
                }
            }
            if total <= 0.0 {
                break;
            }
        }
        let target = rng.next_f64() * total;
        let (mut sa, mut sb) = (0, 0);
        let mut acc = 0.0;
        'pick: for a in 0..3 {
            for b in 0..3 {
                if w[a][b] > 0.0 {
                    (sa, sb) = (a, b);
                    acc += w[a][b];
                    if acc > target {
                        break 'pick;
                    }
                }
            }
        }
        let ia = rng.below(len[sa] as u64) as usize;
        let ib = rng.below(len[sb] as u64) as usize;
        if sa == sb && ia == ib {
            streak += 1;
            continue;
        }
        let (u, v) = (stubs[sa][ia], stubs[sb][ib]);
        let key = ((u.min(v) as u64) << 32) | u.max(v) as u64;
        if u == v || seen.contains(&key) {
            streak += 1;
            continue;
        }
        streak = 0;
        seen.insert(key);
        new_edges.push((u, v));
        if sa == sb {
            let (hi, lo) = (ia.max(ib), ia.min(ib));
            stubs[sa].swap_remove(hi);
            stubs[sa].swap_remove(lo);
        } else {
            stubs[sa].swap_remove(ia);
            stubs[sb].swap_remove(ib);
        }
    }

    let achieved = e + new_edges.len();
    if achieved.abs_diff(plan.target_edges) as f64 > 0.01 * plan.target_edges as f64 {
        return Err(GadError::Construction {
            achieved,
            target: plan.target_edges,
        });
    }

    let mut all_edges: Vec<(u32, u32)> = g.edges().collect();
    all_edges.extend(new_edges);
    let features = concatenate(Axis(0), &[g.features().view(), new_features.view()])
        .map_err(|e| GadError::Shape(e.to_string()))?;
    let mut all_labels = labels.as_slice().to_vec();
    all_labels.extend_from_slice(new_labels);
    build_graph(&all_edges, plan.target_n, features, all_labels)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionValidation {
    pub anomaly_ratio_original: f64,
    pub anomaly_ratio_expanded: f64,
    pub ratio_passed: bool,
    pub degree: KsResult,
    pub degree_passed: bool,
    pub normal_attributes: Option<KsMatrixReport>,
    pub anomaly_attributes: Option<KsMatrixReport>,
    pub passed: bool,
}

fn class_rows(g: &AttributedGraph, labels: &NodeLabels, class: u8) -> Array2<f32> {
    let ids: Vec<usize> = labels.ids_with(class).into_iter().map(|i| i as usize).collect();
    g.features().select(Axis(0), &ids)
}

fn class_report(
    original: &AttributedGraph,
    labels: &NodeLabels,
    expanded: &AttributedGraph,
    expanded_labels: &NodeLabels,
    class: u8,
) -> Result<Option<KsMatrixReport>> {
    let a = class_rows(expanded, expanded_labels, class);
    let b = class_rows(original, labels, class);
    if a.nrows() == 0 || b.nrows() == 0 {
        return Ok(None);
    }
    ks_matrix(a.view(), b.view()).map(Some)
}

/// Checks anomaly ratio (within one node), degree distribution and
/// per-class attribute distributions of an expanded graph against its
/// source. Failures are reported in the record, not raised.
pub fn validate_expansion(
    original: &AttributedGraph,
    labels: &NodeLabels,
    expanded: &AttributedGraph,
    expanded_labels: &NodeLabels,
) -> Result<ExpansionValidation> {
    let r0 = labels.anomaly_ratio();
    let r1 = expanded_labels.anomaly_ratio();
    let ns = expanded.node_count().max(1) as f64;
    let ratio_passed = (r1 - r0).abs() <= 1.0 / ns + 1e-12;

    let d0: Vec<f64> = original.degree_sequence().iter().map(|&d| d as f64).collect();
    let d1: Vec<f64> = expanded.degree_sequence().iter().map(|&d| d as f64).collect();
    let degree = ks_two_sample(&d1, &d0)?;
    let degree_passed = degree.p_value > KS_ALPHA;

    let normal_attributes = class_report(original, labels, expanded, expanded_labels, 0)?;
    let anomaly_attributes = class_report(original, labels, expanded, expanded_labels, 1)?;
    let attr_ok = |r: &Option<KsMatrixReport>| r.as_ref().is_none_or(|r| r.passed);
    let passed =
        ratio_passed && degree_passed && attr_ok(&normal_attributes) && attr_ok(&anomaly_attributes);
    Ok(ExpansionValidation {
        anomaly_ratio_original: r0,
        anomaly_ratio_expanded: r1,
        ratio_passed,
        degree,
        degree_passed,
        normal_attributes,
        anomaly_attributes,
        passed,
    })
}

#[derive(Clone, Debug)]
pub struct Expansion {
    pub graph: AttributedGraph,
    pub labels: NodeLabels,
    pub plan: ExpansionPlan,
    pub normal_components: usize,
    pub anomaly_components: Option<usize>,
    pub validation: ExpansionValidation,
}

fn class_matrix_f64(g: &AttributedGraph, labels: &NodeLabels, class: u8) -> Array2<f64> {
    class_rows(g, labels, class).mapv(|x| x as f64)
}

/// Full expansion pipeline: plan, fit class mixtures, synthesize rows,
/// construct edges, validate.
pub fn expand(
    g: &AttributedGraph,
    labels: &NodeLabels,
    target_n: usize,
    k_candidates: &[usize],
    seed: u64,
) -> Result<Expansion> {
    let plan = plan_expansion(g, labels, target_n)?;
    let x0 = class_matrix_f64(g, labels, 0);
    let x1 = class_matrix_f64(g, labels, 1);
    if x0.nrows() == 0 {
        return Err(GadError::Argument("graph has no normal nodes to model".into()));
    }
    let gmm_normal = fit_gmm(&x0, k_candidates, seed)?;
    let gmm_anomaly = if x1.nrows() > 0 {
        Some(fit_gmm(&x1, k_candidates, seed)?)
    } else {
        None
    };
    drop((x0, x1));
    let (rows, new_labels) = synthesize_attributes(
        &plan,
        &gmm_normal,
        gmm_anomaly.as_ref(),
        &Stream::new(seed, "expand-attributes", 0),
    )?;
    let (graph, exp_labels) = construct_edges(
        &plan,
        g,
        labels,
        rows,
        &new_labels,
        &Stream::new(seed, "expand-edges", 0),
    )?;
    let validation = validate_expansion(g, labels, &graph, &exp_labels)?;
    Ok(Expansion {
        graph,
        labels: exp_labels,
        plan,
        normal_components: gmm_normal.k(),
        anomaly_components: gmm_anomaly.map(|m| m.k()),
        validation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_graph(n: usize, anomalies: usize) -> (AttributedGraph, NodeLabels) {
        let edges: Vec<(u32, u32)> = (0..n as u32 - 1).map(|i| (i, i + 1)).collect();
        let labels = (0..n).map(|i| (i < anomalies) as u8).collect();
        build_graph(&edges, n, Array2::zeros((n, 2)), labels).unwrap()
    }

    #[test]
    fn plan_preserves_ratio_arithmetic() {
        let (g, l) = path_graph(1000, 50);
        let p = plan_expansion(&g, &l, 10_000).unwrap();
        assert_eq!(p.new_nodes, 9000);
        assert_eq!(p.new_anomalies, 450);
        assert_eq!(p.new_normals, 8550);
        assert_eq!(p.original_anomalies + p.new_anomalies, 500);
    }

    #[test]
    fn plan_edge_target_scales_with_nodes() {
        // 1000 nodes, 5000 edges: i -> i+1..=i+5 (mod n)
        let n = 1000u32;
        let edges: Vec<(u32, u32)> =
            (0..n).flat_map(|i| (1..=5).map(move |k| (i, (i + k) % n))).collect();
        let (g, l) =
            build_graph(&edges, 1000, Array2::zeros((1000, 1)), vec![0; 1000]).unwrap();
        assert_eq!(g.edge_count(), 5000);
        let p = plan_expansion(&g, &l, 10_000).unwrap();
        assert_eq!(p.target_edges, 50_000);
    }

    #[test]
    fn identity_plan() {
        let (g, l) = path_graph(100, 5);
        let p = plan_expansion(&g, &l, 100).unwrap();
        assert_eq!((p.new_nodes, p.new_anomalies), (0, 0));
        assert_eq!(p.target_edges, g.edge_count());
        let sum: f64 = p.inter_stratum_edge_fractions.iter().flatten().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn target_below_current_is_an_error() {
        let (g, l) = path_graph(10, 1);
        assert!(matches!(plan_expansion(&g, &l, 9), Err(GadError::Argument(_))));
    }

    #[test]
    fn stub_total_matches_request() {
        let mut rng = Stream::new(1, "t", 0);
        let orig = vec![1, 2, 2, 3, 5, 8, 13];
        let deg = target_degrees(&orig, 700, 1500, &mut rng);
        assert_eq!(deg.iter().sum::<usize>(), 3000);
        assert!(deg.iter().all(|&d| d >= 1));
    }
}
