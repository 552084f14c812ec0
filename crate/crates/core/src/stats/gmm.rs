//! Diagonal-covariance Gaussian mixtures fitted by EM with BIC selection.

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{GadError, Result};
use crate::rng::Stream;
use crate::stats::kmeans::kmeans;

pub const VARIANCE_FLOOR: f64 = 1e-6;
pub const EM_MAX_ITER: usize = 200;
pub const EM_REL_TOL: f64 = 1e-6;
pub const DEFAULT_K_CANDIDATES: [usize; 5] = [1, 2, 3, 4, 5];

const CHUNK: usize = 2048;
const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Clone, Debug, PartialEq)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    /// K x d
    pub means: Array2<f64>,
    /// K x d, every entry >= `VARIANCE_FLOOR`
    pub variances: Array2<f64>,
    pub log_likelihood: f64,
    pub bic: f64,
    /// Log-likelihood at every E-step, in order.
    pub ll_trace: Vec<f64>,
}

impl GmmModel {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 || self.weights.iter().any(|&w| w.is_nan() || w < 0.0) {
            return Err(GadError::Data(format!("mixture weights sum to {total}")));
        }
        if self.variances.iter().any(|&v| v.is_nan() || v < VARIANCE_FLOOR) {
            return Err(GadError::Data("variance below floor".into()));
        }
        Ok(())
    }

    fn n_params(&self) -> usize {
        2 * self.k() * self.dim() + self.k() - 1
    }
}

struct Params {
    log_weights: Vec<f64>,
    means: Array2<f64>,
    inv_var: Array2<f64>,
    log_norm: Vec<f64>,
}

impl Params {
    fn new(weights: &[f64], means: &Array2<f64>, variances: &Array2<f64>) -> Self {
        let log_norm = variances
            .rows()
            .into_iter()
            .map(|v| -0.5 * v.iter().map(|s| LN_2PI + s.ln()).sum::<f64>())
            .collect();
        Params {
            log_weights: weights.iter().map(|w| w.ln()).collect(),
            means: means.clone(),
            inv_var: variances.mapv(|v| 1.0 / v),
            log_norm,
        }
    }

    /// Writes log responsibilities into `out` and returns the row's
    /// log-likelihood.
    fn row(&self, x: &[f64], out: &mut [f64]) -> f64 {
        for (k, o) in out.iter_mut().enumerate() {
            let mu = self.means.row(k);
            let iv = self.inv_var.row(k);
            let mut q = 0.0;
            for j in 0..x.len() {
                let z = x[j] - mu[j];
                q += z * z * iv[j];
            }
            *o = self.log_weights[k] + self.log_norm[k] - 0.5 * q;
        }
        let max = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + out.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        for o in out.iter_mut() {
            *o -= lse;
        }
        lse
    }
}

/// E-step over fixed-size row chunks; partial sums are combined in chunk
/// order so the result does not depend on the thread count.
fn e_step(x: &Array2<f64>, p: &Params, resp: &mut Array2<f64>) -> f64 {
    let k = p.log_weights.len();
    let d = x.ncols();
    let xs = x.as_slice().expect("standard layout");
    let rs = resp.as_slice_mut().expect("standard layout");
    let partial: Vec<f64> = rs
        .par_chunks_mut(CHUNK * k)
        .enumerate()
        .map(|(c, rchunk)| {
            let start = c * CHUNK;
            let mut ll = 0.0;
            for (r, out) in rchunk.chunks_mut(k).enumerate() {
                let i = start + r;
                ll += p.row(&xs[i * d..(i + 1) * d], out);
                for o in out.iter_mut() {
                    *o = o.exp();
                }
            }
            ll
        })
        .collect();
    partial.iter().sum()
}

fn m_step(
    x: &Array2<f64>,
    resp: &Array2<f64>,
    weights: &mut [f64],
    means: &mut Array2<f64>,
    variances: &mut Array2<f64>,
) {
    let (m, d) = x.dim();
    let k = weights.len();
    let chunks: Vec<usize> = (0..m).step_by(CHUNK).collect();

    let first: Vec<(Vec<f64>, Array2<f64>)> = chunks
        .par_iter()
        .map(|&s| {
            let e = (s + CHUNK).min(m);
            let mut nk = vec![0.0; k];
            let mut sx = Array2::<f64>::zeros((k, d));
            for i in s..e {
                let xi = x.row(i);
                for c in 0..k {
                    let r = resp[[i, c]];
                    nk[c] += r;
                    sx.row_mut(c).scaled_add(r, &xi);
                }
            }
            (nk, sx)
        })
        .collect();
    let mut nk = vec![0.0; k];
    let mut sx = Array2::<f64>::zeros((k, d));
    for (n, s) in &first {
        for c in 0..k {
            nk[c] += n[c];
        }
        sx += s;
    }
    for c in 0..k {
        if nk[c] > 0.0 {
            let mean = &sx.row(c) / nk[c];
            means.row_mut(c).assign(&mean);
        }
    }

    let second: Vec<Array2<f64>> = chunks
        .par_iter()
        .map(|&s| {
            let e = (s + CHUNK).min(m);
            let mut sq = Array2::<f64>::zeros((k, d));
            for i in s..e {
                for c in 0..k {
                    let r = resp[[i, c]];
                    let mu = means.row(c);
                    let mut row = sq.row_mut(c);
                    for j in 0..d {
                        let z = x[[i, j]] - mu[j];
                        row[j] += r * z * z;
                    }
                }
            }
            sq
        })
        .collect();
    let mut sq = Array2::<f64>::zeros((k, d));
    for s in &second {
        sq += s;
    }
    let total: f64 = nk.iter().sum();
    for c in 0..k {
        weights[c] = nk[c] / total;
        if nk[c] > 0.0 {
            for j in 0..d {
                variances[[c, j]] = (sq[[c, j]] / nk[c]).max(VARIANCE_FLOOR);
            }
        }
    }
}

fn column_variance(x: ArrayView2<'_, f64>) -> Vec<f64> {
    let m = x.nrows() as f64;
    let mean = x.mean_axis(Axis(0)).unwrap();
    (0..x.ncols())
        .map(|j| {
            let v = x.column(j).iter().map(|&v| (v - mean[j]).powi(2)).sum::<f64>() / m;
            v.max(VARIANCE_FLOOR)
        })
        .collect()
}

/// EM for a fixed component count, initialised from k-means (k-means++
/// seeding).
pub fn fit_gmm_k(x: &Array2<f64>, k: usize, seed: u64) -> Result<GmmModel> {
    let (m, d) = x.dim();
    if k == 0 || m < k {
        return Err(GadError::Argument(format!("GMM needs 1 <= K <= m (K={k}, m={m})")));
    }
    let clusters = kmeans(x.view(), k, seed)?;
    let global_var = column_variance(x.view());
    let mut weights: Vec<f64> = clusters.sizes.iter().map(|&s| s.max(1) as f64).collect();
    let wsum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= wsum);
    let mut means = clusters.centroids.clone();
    let mut variances = Array2::<f64>::zeros((k, d));
    for c in 0..k {
        let members = clusters.members(c);
        for j in 0..d {
            variances[[c, j]] = if members.len() >= 2 {
                let mu = means[[c, j]];
                let v = members.iter().map(|&i| (x[[i, j]] - mu).powi(2)).sum::<f64>()
                    / members.len() as f64;
                v.max(VARIANCE_FLOOR)
            } else {
                global_var[j]
            };
        }
    }

    let mut resp = Array2::<f64>::zeros((m, k));
    let mut ll_trace: Vec<f64> = Vec::new();
    for _ in 0..EM_MAX_ITER {
        let ll = e_step(x, &Params::new(&weights, &means, &variances), &mut resp);
        if let Some(&prev) = ll_trace.last() {
            debug_assert!(
                ll >= prev - 1e-9 * prev.abs().max(1.0),
                "EM log-likelihood decreased: {prev} -> {ll}"
            );
            ll_trace.push(ll);
            if (ll - prev) / prev.abs().max(f64::MIN_POSITIVE) < EM_REL_TOL {
                break;
            }
        } else {
            ll_trace.push(ll);
        }
        m_step(x, &resp, &mut weights, &mut means, &mut variances);
    }
    // If the loop ran out of iterations the last M-step is not yet scored.
    let converged_ll = {
        let ll = e_step(x, &Params::new(&weights, &means, &variances), &mut resp);
        if ll_trace.last() != Some(&ll) {
            ll_trace.push(ll);
        }
        ll
    };
    let mut model = GmmModel {
        weights,
        means,
        variances,
        log_likelihood: converged_ll,
        bic: 0.0,
        ll_trace,
    };
    model.bic = -2.0 * converged_ll + model.n_params() as f64 * (m as f64).ln();
    Ok(model)
}

/// Fits one mixture per candidate K and keeps the lowest BIC. Candidates
/// larger than the sample count are skipped.
pub fn fit_gmm(x: &Array2<f64>, k_candidates: &[usize], seed: u64) -> Result<GmmModel> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(GadError::Data("GMM input has non-finite values".into()));
    }
    let usable: Vec<usize> = k_candidates
        .iter()
        .copied()
        .filter(|&k| k >= 1 && k <= x.nrows())
        .collect();
    if usable.is_empty() {
        return Err(GadError::Argument(format!(
            "no candidate K in {k_candidates:?} fits {} samples",
            x.nrows()
        )));
    }
    let mut best: Option<GmmModel> = None;
    for k in usable {
        let model = fit_gmm_k(x, k, seed)?;
        if best.as_ref().is_none_or(|b| model.bic < b.bic) {
            best = Some(model);
        }
    }
    Ok(best.unwrap())
}

fn draw_row(model: &GmmModel, rng: &mut Stream, out: &mut [f64]) {
    let u = rng.next_f64();
    let mut acc = 0.0;
    let mut comp = model.k() - 1;
    for (c, &w) in model.weights.iter().enumerate() {
        acc += w;
        if u < acc {
            comp = c;
            break;
        }
    }
    for (j, o) in out.iter_mut().enumerate() {
        let z: f64 = rng.sample(StandardNormal);
        *o = model.means[[comp, j]] + model.variances[[comp, j]].sqrt() * z;
    }
}

/// Draws `m` rows; row `i` uses `stream.derive(i)`.
pub fn sample_gmm(model: &GmmModel, m: usize, stream: &Stream) -> Array2<f64> {
    let d = model.dim();
    let mut out = Array2::<f64>::zeros((m, d));
    if d > 0 {
        out.as_slice_mut()
            .unwrap()
            .par_chunks_mut(d)
            .enumerate()
            .for_each(|(i, row)| draw_row(model, &mut stream.derive(i as u64), row));
    }
    out
}

/// As [`sample_gmm`] but stores clamped `[0, 1]` f32 values directly.
pub fn sample_gmm_unit_f32(model: &GmmModel, m: usize, stream: &Stream) -> Array2<f32> {
    let d = model.dim();
    let mut out = Array2::<f32>::zeros((m, d));
    if d > 0 {
        out.as_slice_mut()
            .unwrap()
            .par_chunks_mut(d)
            .enumerate()
            .for_each(|(i, row)| {
                let mut buf = vec![0.0f64; d];
                draw_row(model, &mut stream.derive(i as u64), &mut buf);
                for (o, v) in row.iter_mut().zip(buf) {
                    *o = v.clamp(0.0, 1.0) as f32;
                }
            });
    }
    out
}
