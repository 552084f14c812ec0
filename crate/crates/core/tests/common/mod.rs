#![allow(dead_code)]

use gadforge::detectors::mlpae::{Mlpae, MlpaeConfig};
use gadforge::missing::{ImputeStrategy, MissingMask};
use gadforge::rng::Stream;
use gadforge::synthetic::{generate, SyntheticConfig};
use gadforge::{AttributedGraph, NodeLabels};
use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};

pub fn seed_graph() -> (AttributedGraph, NodeLabels) {
    generate(&SyntheticConfig::default()).unwrap()
}

pub fn small_graph(n: usize, seed: u64) -> (AttributedGraph, NodeLabels) {
    generate(&SyntheticConfig {
        n,
        d: 6,
        anomaly_ratio: 0.1,
        mean_degree: 6.0,
        seed,
        ..Default::default()
    })
    .unwrap()
}

/// Runs `f` on a dedicated rayon pool with `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

/// Adjacency lists rebuilt from the emitted edge list.
pub fn adjacency(g: &AttributedGraph) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); g.node_count()];
    for (u, v) in g.edges() {
        adj[u as usize].push(v as usize);
        adj[v as usize].push(u as usize);
    }
    adj
}

/// Largest deviation of demoted rows from the mean of their originally
/// normal neighbours (global normal mean when there are none).
pub fn demotion_error(
    g: &AttributedGraph,
    labels: &NodeLabels,
    adjusted: &Array2<f32>,
    demoted: &[u32],
) -> f64 {
    let adj = adjacency(g);
    let x = g.features();
    let d = x.ncols();
    let normals: Vec<usize> = (0..g.node_count()).filter(|&i| labels.as_slice()[i] == 0).collect();
    let mean_of = |ids: &[usize]| -> Vec<f64> {
        let mut m = vec![0.0; d];
        for &i in ids {
            for j in 0..d {
                m[j] += x[[i, j]] as f64;
            }
        }
        m.iter().map(|v| v / ids.len() as f64).collect()
    };
    let global = mean_of(&normals);
    let mut worst: f64 = 0.0;
    for &v in demoted {
        let nb: Vec<usize> = adj[v as usize]
            .iter()
            .copied()
            .filter(|&u| labels.as_slice()[u] == 0)
            .collect();
        let expect = if nb.is_empty() { global.clone() } else { mean_of(&nb) };
        for j in 0..d {
            worst = worst.max((adjusted[[v as usize, j]] as f64 - expect[j]).abs());
        }
    }
    worst
}

/// Largest deviation of imputed cells from a brute-force column or
/// adjacency scan.
pub fn imputation_error(
    g: &AttributedGraph,
    labels: &NodeLabels,
    mask: &MissingMask,
    imputed: &Array2<f32>,
    strategy: ImputeStrategy,
) -> f64 {
    let x = g.features();
    let (n, d) = x.dim();
    let mut missing = vec![vec![false; d]; n];
    for &(i, j) in mask.cells() {
        missing[i as usize][j as usize] = true;
    }
    let lab = labels.as_slice();
    let observed = |c: u8, j: usize| -> Vec<f64> {
        (0..n)
            .filter(|&i| lab[i] == c && !missing[i][j])
            .map(|i| x[[i, j]] as f64)
            .collect()
    };
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let median = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        let m = s.len();
        if m % 2 == 1 { s[m / 2] } else { (s[m / 2 - 1] + s[m / 2]) / 2.0 }
    };
    let adj = adjacency(g);
    let mut worst: f64 = 0.0;
    for &(i, j) in mask.cells() {
        let (i, j) = (i as usize, j as usize);
        let c = lab[i];
        let expect = match strategy {
            ImputeStrategy::Mean => mean(&observed(c, j)),
            ImputeStrategy::Median => median(&observed(c, j)),
            ImputeStrategy::Neighbor => {
                let nb: Vec<f64> = adj[i]
                    .iter()
                    .filter(|&&u| lab[u] == c && !missing[u][j])
                    .map(|&u| x[[u, j]] as f64)
                    .collect();
                if nb.is_empty() { mean(&observed(c, j)) } else { mean(&nb) }
            }
        };
        worst = worst.max((imputed[[i, j]] as f64 - expect).abs());
    }
    worst
}

pub fn f32_bits(a: &[f32]) -> Vec<u32> {
    a.iter().map(|x| x.to_bits()).collect()
}

pub fn pairwise_auc(s: &[f64], l: &[u8]) -> f64 {
    let (mut won, mut pairs) = (0.0, 0.0);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if l[i] == 1 && l[j] == 0 {
                pairs += 1.0;
                if s[i] > s[j] {
                    won += 1.0;
                } else if s[i] == s[j] {
                    won += 0.5;
                }
            }
        }
    }
    won / pairs
}

/// Threshold sweep over distinct score values, highest first.
pub fn prefix_scan_ap(s: &[f64], l: &[u8]) -> f64 {
    let positives = l.iter().filter(|&&x| x == 1).count() as f64;
    let mut thresholds = s.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let (mut ap, mut prev_recall) = (0.0, 0.0);
    for t in thresholds {
        let predicted: Vec<usize> = (0..s.len()).filter(|&i| s[i] >= t).collect();
        let tp = predicted.iter().filter(|&&i| l[i] == 1).count() as f64;
        let recall = tp / positives;
        let precision = tp / predicted.len() as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    ap
}

pub fn ecdf(sample: &[f64], x: f64) -> f64 {
    sample.iter().filter(|&&v| v <= x).count() as f64 / sample.len() as f64
}

pub fn brute_force_d(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .chain(b)
        .map(|&x| (ecdf(a, x) - ecdf(b, x)).abs())
        .fold(0.0, f64::max)
}

pub fn mixture_data(seed: u64, m: usize) -> Array2<f64> {
    let mut rng = Stream::new(seed, "em-data", 0);
    let centres = [[0.0, 0.0, 0.0], [2.0, -1.0, 0.5], [-1.5, 2.5, 1.0]];
    let mut x = Array2::<f64>::zeros((m, 3));
    for i in 0..m {
        let c = rng.below(3) as usize;
        for j in 0..3 {
            let z: f64 = StandardNormal.sample(&mut rng);
            x[[i, j]] = centres[c][j] + 0.6 * z;
        }
    }
    x
}

/// Relative error of analytic vs central-difference gradients over all
/// parameters.
pub fn gradient_error(d: usize, hidden: &[usize], rows: usize, seed: u64) -> f64 {
    let cfg = MlpaeConfig {
        hidden_dims: hidden.to_vec(),
        seed,
        ..Default::default()
    };
    let mut model = Mlpae::init(d, &cfg).unwrap();
    let mut rng = Stream::new(seed, "grad-check", 0);
    // non-zero biases keep pre-activations away from the kink at zero
    let mut p = model.params_flat();
    p.iter_mut().for_each(|v| *v += 0.1 * (rng.next_f64() - 0.5));
    model.set_params_flat(&p);
    let h = 1e-6;
    // the loss is not differentiable where a hidden unit sits on the kink,
    // so redraw until every pre-activation is well clear of it
    let x = loop {
        let x = Array2::from_shape_fn((rows, d), |_| rng.next_f64());
        if min_hidden_margin(&model, &x) > 100.0 * h {
            break x;
        }
    };

    let (_, grads) = model.loss_and_grad(&x);
    let analytic: Vec<f64> = grads
        .weights
        .iter()
        .zip(&grads.bias)
        .flat_map(|(w, b)| w.iter().chain(b.iter()).copied().collect::<Vec<_>>())
        .collect();
    let mut num = Vec::with_capacity(p.len());
    for k in 0..p.len() {
        let mut probe = model.clone();
        let mut q = p.clone();
        q[k] = p[k] + h;
        probe.set_params_flat(&q);
        let up = probe.loss(&x);
        q[k] = p[k] - h;
        probe.set_params_flat(&q);
        let down = probe.loss(&x);
        num.push((up - down) / (2.0 * h));
    }
    let diff: f64 = analytic.iter().zip(&num).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt()
        + num.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / scale.max(1e-12)
}

/// Smallest distance of any hidden pre-activation from the rectifier kink.
pub fn min_hidden_margin(model: &Mlpae, x: &Array2<f64>) -> f64 {
    let mut a = x.clone();
    let mut margin = f64::INFINITY;
    let last = model.layers.len() - 1;
    for (l, layer) in model.layers.iter().enumerate() {
        a = a.dot(&layer.weights) + &layer.bias;
        if l < last {
            margin = a.iter().fold(margin, |m, v| m.min(v.abs()));
            a.mapv_inplace(|v| v.max(0.0));
        }
    }
    margin
}
