use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{GadError, Result};

use super::{AbortSignal, ScoreVector};

/// Mean Euclidean distance from each row to its `k` nearest training rows.
/// A training row never counts as its own neighbour (duplicates do).
pub fn score_knn(
    features: &Array2<f32>,
    train_ids: &[u32],
    k: usize,
    abort: &AbortSignal,
) -> Result<ScoreVector> {
    if k < 1 || k > train_ids.len() {
        return Err(GadError::Argument(format!(
            "k={k} outside 1..={} training rows",
            train_ids.len()
        )));
    }
    let n = features.nrows();
    if let Some(&bad) = train_ids.iter().find(|&&i| i as usize >= n) {
        return Err(GadError::Argument(format!("training id {bad} >= n={n}")));
    }
    let scores = (0..n)
        .into_par_iter()
        .map(|i| {
            if i % 256 == 0 {
                abort.check()?;
            }
            let q = features.row(i);
            let mut dist: Vec<f64> = train_ids
                .iter()
                .filter(|&&t| t as usize != i)
                .map(|&t| {
                    q.iter()
                        .zip(features.row(t as usize))
                        .map(|(&a, &b)| {
                            let z = a as f64 - b as f64;
                            z * z
                        })
                        .sum::<f64>()
                        .sqrt()
                })
                .collect();
            let take = k.min(dist.len());
            if take == 0 {
                return Ok(0.0);
            }
            dist.select_nth_unstable_by(take - 1, f64::total_cmp);
            let nearest = &mut dist[..take];
            // fixed summation order keeps scores permutation-equivariant
            nearest.sort_unstable_by(f64::total_cmp);
            Ok(nearest.iter().sum::<f64>() / take as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    ScoreVector::new(format!("knn{k}"), scores)
}
