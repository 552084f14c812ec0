//! Multi-layer perceptron autoencoder scored by per-row reconstruction error.
//!
//! Layer widths mirror around the bottleneck: `d -> h1 -> ... -> hk -> ... ->
//! h1 -> d`, rectifier on every hidden layer, identity on the output.
//! Training runs in f64 with Adam on the mean squared reconstruction error.
//!
//! Checkpoint layout: `GADW`, u32 width count, u32 widths, then per layer the
//! `in x out` weight matrix (row-major) followed by the bias, all f64 LE.

use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GadError, Result};
use crate::rng::Stream;

use super::{AbortSignal, ScoreVector};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GADW";
const SCORE_CHUNK: usize = 1024;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpaeConfig {
    pub hidden_dims: Vec<usize>,
    pub learning_rate: f64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for MlpaeConfig {
    fn default() -> Self {
        Self {
            hidden_dims: vec![64, 32],
            learning_rate: 1e-3,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            epochs: 100,
            batch_size: 1024,
            patience: 10,
            seed: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// in x out
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlpae {
    pub layers: Vec<Layer>,
    /// Mean training loss per epoch, measured before each batch update.
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: Option<usize>,
}

pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub bias: Vec<Array1<f64>>,
}

impl Mlpae {
    pub fn widths(d: usize, hidden: &[usize]) -> Vec<usize> {
        let mut w = vec![d];
        w.extend_from_slice(hidden);
        w.extend(hidden.iter().rev().skip(1));
        w.push(d);
        w
    }

    /// He-uniform weights for rectified layers, Glorot-uniform for the
    /// output layer, zero biases.
    pub fn init(d: usize, config: &MlpaeConfig) -> Result<Mlpae> {
        if d == 0 || config.hidden_dims.is_empty() || config.hidden_dims.contains(&0) {
            return Err(GadError::Argument(
                "MLPAE needs d >= 1 and non-empty positive hidden widths".into(),
            ));
        }
        let widths = Self::widths(d, &config.hidden_dims);
        let count = widths.len() - 1;
        let layers = (0..count)
            .map(|l| {
                let (fan_in, fan_out) = (widths[l], widths[l + 1]);
                let limit = if l + 1 == count {
                    (6.0 / (fan_in + fan_out) as f64).sqrt()
                } else {
                    (6.0 / fan_in as f64).sqrt()
                };
                let mut rng = Stream::new(config.seed, "mlpae-init", l as u64);
                let weights = Array2::from_shape_simple_fn((fan_in, fan_out), || {
                    (2.0 * rng.next_f64() - 1.0) * limit
                });
                Layer {
                    weights,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Mlpae {
            layers,
            train_loss: Vec::new(),
            val_loss: Vec::new(),
            best_epoch: None,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn widths_of(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.layers.iter().map(|l| l.weights.ncols()));
        w
    }

    /// Pre-activations and activations of every layer; `acts[0]` is the input.
    fn forward_full(&self, x: &Array2<f64>) -> (Vec<Array2<f64>>, Vec<Array2<f64>>) {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut acts = vec![x.clone()];
        for (l, layer) in self.layers.iter().enumerate() {
            let z = acts[l].dot(&layer.weights) + &layer.bias;
            let a = if l + 1 == self.layers.len() {
                z.clone()
            } else {
                z.mapv(|v| v.max(0.0))
            };
            pre.push(z);
            acts.push(a);
        }
        (pre, acts)
    }

    pub fn reconstruct(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut a = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            a = a.dot(&layer.weights) + &layer.bias;
            if l + 1 < self.layers.len() {
                a.mapv_inplace(|v| v.max(0.0));
            }
        }
        a
    }

    /// Mean squared reconstruction error over all cells of `x`.
    pub fn loss(&self, x: &Array2<f64>) -> f64 {
        let r = self.reconstruct(x);
        (&r - x).mapv(|v| v * v).sum() / x.len() as f64
    }

    pub fn loss_and_grad(&self, x: &Array2<f64>) -> (f64, Gradients) {
        let (pre, acts) = self.forward_full(x);
        let out = acts.last().unwrap();
        let diff = out - x;
        let loss = diff.mapv(|v| v * v).sum() / x.len() as f64;
        let mut delta = diff * (2.0 / x.len() as f64);
        let count = self.layers.len();
        let mut gw = vec![Array2::zeros((0, 0)); count];
        let mut gb = vec![Array1::zeros(0); count];
        for l in (0..count).rev() {
            gw[l] = acts[l].t().dot(&delta);
            gb[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut back = delta.dot(&self.layers[l].weights.t());
                back.zip_mut_with(&pre[l - 1], |g, &z| {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                });
                delta = back;
            }
        }
        (
            loss,
            Gradients {
                weights: gw,
                bias: gb,
            },
        )
    }

    /// All parameters, layer by layer: weights row-major then bias.
    pub fn params_flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied().collect::<Vec<_>>())
            .collect()
    }

    pub fn set_params_flat(&mut self, params: &[f64]) {
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut() {
                *w = it.next().expect("parameter vector too short");
            }
            for b in l.bias.iter_mut() {
                *b = it.next().expect("parameter vector too short");
            }
        }
        assert!(it.next().is_none(), "parameter vector too long");
    }

    pub fn encode_checkpoint(&self) -> Vec<u8> {
        let widths = self.widths_of();
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&(widths.len() as u32).to_le_bytes());
        for w in &widths {
            buf.extend_from_slice(&(*w as u32).to_le_bytes());
        }
        for p in self.params_flat() {
            buf.extend_from_slice(&p.to_le_bytes());
        }
        buf
    }

    pub fn decode_checkpoint(bytes: &[u8]) -> Result<Mlpae> {
        let bad = || GadError::MalformedInput("invalid GADW checkpoint".into());
        if bytes.len() < 8 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(bad());
        }
        let word = |o: usize| -> Result<usize> {
            bytes
                .get(o..o + 4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize)
                .ok_or_else(bad)
        };
        let count = word(4)?;
        if count < 2 {
            return Err(bad());
        }
        let widths: Vec<usize> = (0..count).map(|i| word(8 + 4 * i)).collect::<Result<_>>()?;
        let start = 8 + 4 * count;
        let n_params: usize = widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if bytes.len() != start + 8 * n_params {
            return Err(bad());
        }
        let params: Vec<f64> = bytes[start..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut model = Mlpae {
            layers: widths
                .windows(2)
                .map(|w| Layer {
                    weights: Array2::zeros((w[0], w[1])),
                    bias: Array1::zeros(w[1]),
                })
                .collect(),
            train_loss: Vec::new(),
            val_loss: Vec::new(),
            best_epoch: None,
        };
        model.set_params_flat(&params);
        Ok(model)
    }
}

fn gather(features: &Array2<f32>, ids: &[u32]) -> Array2<f64> {
    let d = features.ncols();
    let mut out = Array2::<f64>::zeros((ids.len(), d));
    for (r, &i) in ids.iter().enumerate() {
        out.row_mut(r)
            .zip_mut_with(&features.row(i as usize), |o, &x| *o = x as f64);
    }
    out
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

fn mean_loss(model: &Mlpae, features: &Array2<f32>, ids: &[u32]) -> f64 {
    let parts: Vec<(f64, usize)> = ids
        .par_chunks(SCORE_CHUNK)
        .map(|chunk| {
            let x = gather(features, chunk);
            (model.loss(&x) * x.len() as f64, x.len())
        })
        .collect();
    let (sse, cells) = parts
        .iter()
        .fold((0.0, 0usize), |(s, c), (ps, pc)| (s + ps, c + pc));
    sse / cells.max(1) as f64
}

/// Label-free training on `train_ids`; early stopping on the reconstruction
/// loss of `val_ids` restores the best epoch's parameters. With an empty
/// validation set every epoch runs and the final parameters are kept.
pub fn train_mlpae(
    features: &Array2<f32>,
    train_ids: &[u32],
    val_ids: &[u32],
    config: &MlpaeConfig,
    abort: &AbortSignal,
) -> Result<Mlpae> {
    if train_ids.is_empty() {
        return Err(GadError::Argument("MLPAE training set is empty".into()));
    }
    if config.batch_size == 0 {
        return Err(GadError::Argument("batch_size must be at least 1".into()));
    }
    let n = features.nrows();
    if let Some(&bad) = train_ids.iter().chain(val_ids).find(|&&i| i as usize >= n) {
        return Err(GadError::Argument(format!("node id {bad} >= n={n}")));
    }
    let mut model = Mlpae::init(features.ncols(), config)?;
    let mut flat = model.params_flat();
    let mut adam = Adam {
        m: vec![0.0; flat.len()],
        v: vec![0.0; flat.len()],
        t: 0,
    };
    let (b1, b2) = config.adam_betas;
    let mut best: Option<(f64, Vec<f64>, usize)> = None;
    let mut stale = 0usize;
    let mut order = train_ids.to_vec();

    for epoch in 0..config.epochs {
        Stream::new(config.seed, "mlpae-epoch", epoch as u64).shuffle(&mut order);
        let mut sse = 0.0;
        for batch in order.chunks(config.batch_size) {
            abort.check()?;
            let x = gather(features, batch);
            let (loss, grads) = model.loss_and_grad(&x);
            sse += loss * x.len() as f64;
            adam.t += 1;
            let c1 = 1.0 - b1.powi(adam.t);
            let c2 = 1.0 - b2.powi(adam.t);
            let g_flat = grads
                .weights
                .iter()
                .zip(&grads.bias)
                .flat_map(|(w, b)| w.iter().chain(b.iter()).copied().collect::<Vec<_>>());
            for (k, g) in g_flat.enumerate() {
                adam.m[k] = b1 * adam.m[k] + (1.0 - b1) * g;
                adam.v[k] = b2 * adam.v[k] + (1.0 - b2) * g * g;
                let mh = adam.m[k] / c1;
                let vh = adam.v[k] / c2;
                flat[k] -= config.learning_rate * mh / (vh.sqrt() + config.adam_eps);
            }
            model.set_params_flat(&flat);
        }
        model
            .train_loss
            .push(sse / (train_ids.len() * features.ncols()) as f64);

        if val_ids.is_empty() {
            continue;
        }
        abort.check()?;
        let val = mean_loss(&model, features, val_ids);
        model.val_loss.push(val);
        if best.as_ref().is_none_or(|(b, _, _)| val < *b) {
            best = Some((val, flat.clone(), epoch));
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    if let Some((_, params, epoch)) = best {
        model.set_params_flat(&params);
        model.best_epoch = Some(epoch);
    }
    Ok(model)
}

/// Per-row mean squared reconstruction error.
pub fn score_mlpae(model: &Mlpae, features: &Array2<f32>) -> Result<ScoreVector> {
    if features.ncols() != model.input_dim() {
        return Err(GadError::Shape(format!(
            "model expects d={}, features have d={}",
            model.input_dim(),
            features.ncols()
        )));
    }
    let ids: Vec<u32> = (0..features.nrows() as u32).collect();
    let parts: Vec<Vec<f64>> = ids
        .par_chunks(SCORE_CHUNK)
        .map(|chunk| {
            let x = gather(features, chunk);
            let r = model.reconstruct(&x);
            (&r - &x)
                .mapv(|v| v * v)
                .mean_axis(Axis(1))
                .unwrap()
                .to_vec()
        })
        .collect();
    ScoreVector::new("mlpae", parts.concat())
}
