//! Node splits and ranking metrics.

use serde::{Deserialize, Serialize};

use crate::error::{GadError, Result};
use crate::graph::NodeLabels;
use crate::rng::Stream;

pub const DEFAULT_FRACTIONS: (f64, f64, f64) = (0.7, 0.1, 0.2);
pub const DEFAULT_SPLIT_SEED: u64 = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_ids: Vec<u32>,
    pub val_ids: Vec<u32>,
    pub test_ids: Vec<u32>,
    pub fractions: (f64, f64, f64),
    pub stratified: bool,
    pub seed: u64,
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Seeded train/validation/test partition. Each class (or the whole id range
/// when not stratified) is shuffled and cut at `round(f_train * n_c)` and
/// `round(f_val * n_c)`; the test set takes the remainder.
pub fn split_nodes(
    n: usize,
    labels: &NodeLabels,
    fractions: (f64, f64, f64),
    stratified: bool,
    seed: u64,
) -> Result<SplitSpec> {
    let (ft, fv, fs) = fractions;
    if ![ft, fv, fs].iter().all(|f| f.is_finite() && *f > 0.0) {
        return Err(GadError::Argument(format!(
            "split fractions must be positive, got {fractions:?}"
        )));
    }
    if (ft + fv + fs - 1.0).abs() > 1e-9 {
        return Err(GadError::Argument(format!(
            "split fractions must sum to 1, got {}",
            ft + fv + fs
        )));
    }
    if labels.len() != n {
        return Err(GadError::Shape(format!(
            "{} labels for {n} nodes",
            labels.len()
        )));
    }
    let groups: Vec<Vec<u32>> = if stratified {
        vec![labels.ids_with(0), labels.ids_with(1)]
    } else {
        vec![(0..n as u32).collect()]
    };
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (g, mut ids) in groups.into_iter().enumerate() {
        Stream::new(seed, "split", g as u64).shuffle(&mut ids);
        let c = ids.len();
        let n_train = round_half_up(ft * c as f64).min(c);
        let n_val = round_half_up(fv * c as f64).min(c - n_train);
        train.extend_from_slice(&ids[..n_train]);
        val.extend_from_slice(&ids[n_train..n_train + n_val]);
        test.extend_from_slice(&ids[n_train + n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(SplitSpec {
        train_ids: train,
        val_ids: val,
        test_ids: test,
        fractions,
        stratified,
        seed,
    })
}

fn check_inputs(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(GadError::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(GadError::Data("NaN score".into()));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    Ok((pos, labels.len() - pos))
}

/// Indices sorted by descending score, ties by ascending index.
fn descending_order(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// Area under the ROC curve via the midrank Mann-Whitney statistic.
pub fn auc_roc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check_inputs(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(GadError::Data(
            "AUC-ROC needs at least one positive and one negative".into(),
        ));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // ranks i+1..=j+1
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * idx[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let (p, q) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

/// Average precision with tied scores handled as one cut point.
pub fn auc_pr(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, _) = check_inputs(scores, labels)?;
    if pos == 0 {
        return Err(GadError::Data("AUC-PR needs at least one positive".into()));
    }
    let idx = descending_order(scores);
    let (mut tp, mut seen, mut ap) = (0usize, 0usize, 0.0);
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let gained = idx[i..=j].iter().filter(|&&k| labels[k] == 1).count();
        tp += gained;
        seen += j - i + 1;
        if gained > 0 {
            ap += tp as f64 / seen as f64 * gained as f64;
        }
        i = j + 1;
    }
    Ok(ap / pos as f64)
}

/// Fraction of positives found in the top `k` (default: the positive count).
pub fn recall_at_k(scores: &[f64], labels: &[u8], k: Option<usize>) -> Result<(f64, usize)> {
    let (pos, _) = check_inputs(scores, labels)?;
    if pos == 0 {
        return Err(GadError::Data("recall needs at least one positive".into()));
    }
    let k = k.unwrap_or(pos);
    if k == 0 || k > scores.len() {
        return Err(GadError::Argument(format!(
            "k={k} outside 1..={}",
            scores.len()
        )));
    }
    let hits = descending_order(scores)[..k]
        .iter()
        .filter(|&&i| labels[i] == 1)
        .count();
    Ok((hits as f64 / pos as f64, k))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let l = [1u8, 0, 1, 0];
        let s = [0.9, 0.8, 0.7, 0.1];
        assert!((auc_roc(&s, &l).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(recall_at_k(&s, &l, Some(2)).unwrap().0, 0.5);
        assert_eq!(auc_roc(&[0.3; 4], &l).unwrap(), 0.5);
        assert_eq!(auc_pr(&[4.0, 3.0, 2.0, 1.0], &[0, 0, 0, 1]).unwrap(), 0.25);
        assert_eq!(auc_pr(&[4.0, 3.0, 2.0, 1.0], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert!(auc_pr(&s, &[0; 4]).is_err());
        assert!(auc_roc(&s, &[1; 4]).is_err());
        assert_eq!(recall_at_k(&[0.1, 0.9], &[1, 0], Some(1)).unwrap().0, 0.0);
        assert!(recall_at_k(&s, &l, Some(5)).is_err());
    }

    #[test]
    fn recall_boundary_ties_prefer_low_ids() {
        let s = [0.5, 0.5, 0.5];
        assert_eq!(recall_at_k(&s, &[1, 0, 0], Some(1)).unwrap().0, 1.0);
        assert_eq!(recall_at_k(&s, &[0, 0, 1], Some(1)).unwrap().0, 0.0);
    }

    #[test]
    fn split_contract() {
        let mut l = vec![0u8; 1000];
        l[..100].fill(1);
        let labels = NodeLabels::new(l).unwrap();
        assert!(split_nodes(1000, &labels, (0.5, 0.5, 0.1), true, 20).is_err());
        let s = split_nodes(1000, &labels, DEFAULT_FRACTIONS, true, 20).unwrap();
        let mut all: Vec<u32> = [&s.train_ids[..], &s.val_ids, &s.test_ids].concat();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
        let test_anoms = s.test_ids.iter().filter(|&&i| i < 100).count();
        assert!((19..=21).contains(&test_anoms));
        assert_eq!(s, split_nodes(1000, &labels, DEFAULT_FRACTIONS, true, 20).unwrap());
    }
}
