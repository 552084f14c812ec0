//! Lloyd's k-means with k-means++ seeding.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;

use crate::error::{GadError, Result};
use crate::rng::Stream;

pub const KMEANS_MAX_ITER: usize = 100;

#[derive(Clone, Debug)]
pub struct ClusterAssignment {
    pub assignment: Vec<usize>,
    pub centroids: Array2<f64>,
    pub sizes: Vec<usize>,
    /// Inertia after each assignment step.
    pub inertia_trace: Vec<f64>,
}

impl ClusterAssignment {
    pub fn inertia(&self) -> f64 {
        *self.inertia_trace.last().unwrap_or(&0.0)
    }

    /// Member indices of cluster `k`, ascending.
    pub fn members(&self, k: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &a)| a == k)
            .map(|(i, _)| i)
            .collect()
    }
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding: first centre uniform, the rest with probability
/// proportional to squared distance from the nearest chosen centre.
pub fn kmeans_pp_seed(x: ArrayView2<'_, f64>, k: usize, rng: &mut Stream) -> Array2<f64> {
    let m = x.nrows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.below(m as u64) as usize);
    let mut best: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|i| sq_dist(x.row(i), x.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = best.iter().sum();
        let next = if total > 0.0 {
            let target = rng.next_f64() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in best.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave `target` just above the final sum
            pick.unwrap_or_else(|| best.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            // every point coincides with a centre; take an unused index
            let free: Vec<usize> = (0..m).filter(|i| !chosen.contains(i)).collect();
            free[rng.below(free.len() as u64) as usize]
        };
        chosen.push(next);
        let c = x.row(next);
        best.par_iter_mut().enumerate().for_each(|(i, b)| {
            *b = b.min(sq_dist(x.row(i), c));
        });
    }
    let mut centroids = Array2::zeros((k, x.ncols()));
    for (r, &i) in chosen.iter().enumerate() {
        centroids.row_mut(r).assign(&x.row(i));
    }
    centroids
}

fn assign(x: ArrayView2<'_, f64>, centroids: &Array2<f64>) -> (Vec<usize>, Vec<f64>) {
    (0..x.nrows())
        .into_par_iter()
        .map(|i| {
            let mut best = (0usize, f64::INFINITY);
            for (k, c) in centroids.rows().into_iter().enumerate() {
                let d = sq_dist(x.row(i), c);
                if d < best.1 {
                    best = (k, d);
                }
            }
            best
        })
        .unzip()
}

fn means(x: ArrayView2<'_, f64>, assignment: &[usize], centroids: &mut Array2<f64>) -> Vec<usize> {
    let k = centroids.nrows();
    let mut sums = Array2::<f64>::zeros((k, x.ncols()));
    let mut sizes = vec![0usize; k];
    for (i, &a) in assignment.iter().enumerate() {
        sizes[a] += 1;
        let mut row = sums.row_mut(a);
        row += &x.row(i);
    }
    for c in 0..k {
        if sizes[c] > 0 {
            let mean = &sums.row(c) / sizes[c] as f64;
            centroids.row_mut(c).assign(&mean);
        }
    }
    sizes
}

pub fn kmeans(x: ArrayView2<'_, f64>, k: usize, seed: u64) -> Result<ClusterAssignment> {
    let m = x.nrows();
    if k == 0 || m < k {
        return Err(GadError::Argument(format!("k-means needs 1 <= k <= m (k={k}, m={m})")));
    }
    let mut rng = Stream::new(seed, "kmeans++", k as u64);
    let mut centroids = kmeans_pp_seed(x, k, &mut rng);
    let (mut assignment, dist) = assign(x, &centroids);
    let mut inertia_trace = vec![dist.iter().sum::<f64>()];

    for _ in 0..KMEANS_MAX_ITER {
        let sizes = means(x, &assignment, &mut centroids);
        for c in (0..k).filter(|&c| sizes[c] == 0) {
            // re-seed an empty cluster at the point farthest from its centroid
            let (far, _) = (0..m)
                .map(|i| (i, sq_dist(x.row(i), centroids.row(assignment[i]))))
                .fold((0, f64::NEG_INFINITY), |acc, v| if v.1 > acc.1 { v } else { acc });
            centroids.row_mut(c).assign(&x.row(far));
            assignment[far] = c;
        }
        let (next, dist) = assign(x, &centroids);
        inertia_trace.push(dist.iter().sum());
        if next == assignment {
            break;
        }
        assignment = next;
    }
    let sizes = means(x, &assignment, &mut centroids);
    Ok(ClusterAssignment {
        assignment,
        centroids,
        sizes,
        inertia_trace,
    })
}
