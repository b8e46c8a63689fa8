//! Joint training of the two heads with manual backprop and Adam, plus the
//! finite-difference gradient verifier.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::events::TrainingExample;
use crate::features::{encode, none_token, FeatureSchema};
use crate::rng;

use super::{
    conversion_logit, init, sigmoid, trunk_forward, ModelConfig, ModelParams, PredictionPair,
    TensorSet,
};

const PROB_FLOOR: f64 = 1e-7;

fn bce(p: f64, y: f64) -> f64 {
    let p = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Weighted joint loss for a single prediction pair:
/// `w_e * mean-over-k BCE(engagement) + w_b * BCE(booking)`.
pub fn loss(pred: &PredictionPair, example: &TrainingExample, weights: (f64, f64)) -> f64 {
    let k = pred.engagement_probs.len() as f64;
    let engagement: f64 = pred
        .engagement_probs
        .iter()
        .zip(&example.engagement_labels)
        .map(|(&p, &y)| bce(p, y as f64))
        .sum::<f64>()
        / k;
    let booking = bce(pred.booking_prob, example.booking_label as f64);
    weights.0 * engagement + weights.1 * booking
}

/// Conversion-head tokens an example contributes: one row per applied filter,
/// or the explicit no-filter token when nothing was applied.
pub fn conversion_tokens(example: &TrainingExample, k: usize) -> Vec<usize> {
    let applied = example.filters.applied_ids();
    if applied.is_empty() {
        vec![none_token(k)]
    } else {
        applied
    }
}

/// Full multi-row loss of one example, as optimized by `train`: the booking
/// term is averaged over the example's conversion rows.
pub fn example_loss(
    params: &ModelParams,
    schema: &FeatureSchema,
    example: &TrainingExample,
    weights: (f64, f64),
) -> Result<f64> {
    let encoded = encode(&example.query, schema, None);
    let cache = trunk_forward(&params.tensors, &encoded)?;
    let h = cache.activations.last().expect("trunk has layers");

    let k = params.k as f64;
    let engagement: f64 = params
        .tensors
        .engagement_head
        .forward(h)
        .iter()
        .zip(&example.engagement_labels)
        .map(|(&z, &y)| bce(sigmoid(z), y as f64))
        .sum::<f64>()
        / k;

    let tokens = conversion_tokens(example, params.k);
    let booking: f64 = tokens
        .iter()
        .map(|&t| {
            bce(
                sigmoid(conversion_logit(&params.tensors, h, t)),
                example.booking_label as f64,
            )
        })
        .sum::<f64>()
        / tokens.len() as f64;

    Ok(example.weight * (weights.0 * engagement + weights.1 * booking))
}

/// Backprop one example, accumulating into `grads`. Returns the example loss.
fn backprop_example(
    params: &ModelParams,
    schema: &FeatureSchema,
    example: &TrainingExample,
    weights: (f64, f64),
    grads: &mut TensorSet,
) -> Result<f64> {
    let tensors = &params.tensors;
    let encoded = encode(&example.query, schema, None);
    let cache = trunk_forward(tensors, &encoded)?;
    let h = cache.activations.last().expect("trunk has layers");
    let (w_e, w_b) = weights;
    let ex_weight = example.weight;

    let k = params.k;
    let mut loss_total = 0.0;
    // d(loss)/d(trunk output), accumulated from both heads
    let mut dh = vec![0.0; h.len()];

    // Engagement head: mean-over-k BCE. dL/dz_i = w_e * (p_i - y_i) / k.
    let logits = tensors.engagement_head.forward(h);
    for (i, (&z, &y)) in logits.iter().zip(&example.engagement_labels).enumerate() {
        let p = sigmoid(z);
        let y = y as f64;
        loss_total += w_e * bce(p, y) / k as f64;
        let dz = ex_weight * w_e * (p - y) / k as f64;
        grads.engagement_head.b[i] += dz;
        for (g, &hv) in grads.engagement_head.w.row_mut(i).iter_mut().zip(h) {
            *g += dz * hv;
        }
        for (dhv, &wv) in dh.iter_mut().zip(tensors.engagement_head.w.row(i)) {
            *dhv += dz * wv;
        }
    }

    // Conversion head: mean BCE over this example's rows.
    let tokens = conversion_tokens(example, k);
    let m = tokens.len() as f64;
    let y = example.booking_label as f64;
    let trunk_dim = h.len();
    for &t in &tokens {
        let p = sigmoid(conversion_logit(tensors, h, t));
        loss_total += w_b * bce(p, y) / m;
        let dz = ex_weight * w_b * (p - y) / m;
        grads.conversion_head.b[0] += dz;
        let emb = tensors.filter_embedding.row(t);
        let head_row = tensors.conversion_head.w.row(0);
        {
            let grow = grads.conversion_head.w.row_mut(0);
            for (g, &v) in grow.iter_mut().zip(h.iter().chain(emb)) {
                *g += dz * v;
            }
        }
        for (dhv, &wv) in dh.iter_mut().zip(&head_row[..trunk_dim]) {
            *dhv += dz * wv;
        }
        let gemb = grads.filter_embedding.row_mut(t);
        for (g, &wv) in gemb.iter_mut().zip(&head_row[trunk_dim..]) {
            *g += dz * wv;
        }
    }

    // Trunk backward through the ReLU stack.
    let mut delta = dh;
    for layer_idx in (0..tensors.trunk.len()).rev() {
        let act = &cache.activations[layer_idx];
        // ReLU': activation > 0 (post-activation equals pre-activation sign)
        for (d, &a) in delta.iter_mut().zip(act) {
            if a <= 0.0 {
                *d = 0.0;
            }
        }
        let prev: &[f64] = if layer_idx == 0 {
            &cache.input
        } else {
            &cache.activations[layer_idx - 1]
        };
        let layer = &tensors.trunk[layer_idx];
        let glayer = &mut grads.trunk[layer_idx];
        for (r, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            glayer.b[r] += d;
            for (g, &pv) in glayer.w.row_mut(r).iter_mut().zip(prev) {
                *g += d * pv;
            }
        }
        let mut dprev = vec![0.0; prev.len()];
        layer.w.matvec_transpose_add(&delta, &mut dprev);
        delta = dprev;
    }

    // Scatter the input gradient into the used embedding rows; the dense
    // segment has no parameters.
    let mut offset = 0;
    for (idx, table) in encoded.categorical_indices.iter().zip(&mut grads.embeddings) {
        let dim = table.cols;
        let row = table.row_mut(*idx);
        for (g, &d) in row.iter_mut().zip(&delta[offset..offset + dim]) {
            *g += d;
        }
        offset += dim;
    }

    Ok(ex_weight * loss_total)
}

/// Adam state and step (bias-corrected, beta 0.9 / 0.999).
struct Adam {
    m: TensorSet,
    v: TensorSet,
    t: u64,
    lr: f64,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Adam {
    fn new(shape: &TensorSet, lr: f64) -> Self {
        Self { m: shape.zeros_like(), v: shape.zeros_like(), t: 0, lr }
    }

    fn step(&mut self, params: &mut TensorSet, grads: &TensorSet) {
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t as i32);
        let bc2 = 1.0 - BETA2.powi(self.t as i32);
        let g = grads.slices();
        let mut p = params.slices_mut();
        let mut m = self.m.slices_mut();
        let mut v = self.v.slices_mut();
        for i in 0..g.len() {
            let gs = g[i].1;
            let ps = &mut p[i].1;
            let ms = &mut m[i].1;
            let vs = &mut v[i].1;
            for j in 0..gs.len() {
                let grad = gs[j];
                ms[j] = BETA1 * ms[j] + (1.0 - BETA1) * grad;
                vs[j] = BETA2 * vs[j] + (1.0 - BETA2) * grad * grad;
                let mhat = ms[j] / bc1;
                let vhat = vs[j] / bc2;
                ps[j] -= self.lr * mhat / (vhat.sqrt() + ADAM_EPS);
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub eval_pr_auc_booking: Option<f64>,
    pub eval_pr_auc_engagement: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<EpochStats>,
}

/// Mini-batch training of both heads jointly. Deterministic for a fixed
/// config: the epoch shuffles derive from the config seed and accumulation
/// order is fixed.
pub fn train(
    train_set: &[TrainingExample],
    eval_set: &[TrainingExample],
    config: &ModelConfig,
    schema: &FeatureSchema,
) -> Result<(ModelParams, TrainReport)> {
    if train_set.is_empty() {
        return Err(CoreError::EmptyInput("empty training set".into()));
    }
    let mut params = init(config, schema, config.seed)?;
    let mut grads = params.tensors.zeros_like();
    let mut adam = Adam::new(&params.tensors, config.learning_rate);
    let mut history = Vec::with_capacity(config.epochs);

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..config.epochs {
        let mut shuffle_rng = rng::stream(config.seed, 0xE70C ^ (epoch as u64 + 1));
        order.shuffle(&mut shuffle_rng);

        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.zero();
            let mut batch_loss = 0.0;
            for &i in batch {
                batch_loss +=
                    backprop_example(&params, schema, &train_set[i], config.loss_weights, &mut grads)?;
            }
            if !batch_loss.is_finite() {
                return Err(CoreError::Diverged(format!(
                    "non-finite loss in epoch {epoch}; try a lower learning rate"
                )));
            }
            let scale = 1.0 / batch.len() as f64;
            for (_, slice) in grads.slices_mut() {
                slice.iter_mut().for_each(|g| *g *= scale);
            }
            adam.step(&mut params.tensors, &grads);
            loss_sum += batch_loss;
        }

        let (auc_booking, auc_engagement) = eval_aucs(&params, schema, eval_set);
        history.push(EpochStats {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            eval_pr_auc_booking: auc_booking,
            eval_pr_auc_engagement: auc_engagement,
        });
    }

    Ok((params, TrainReport { history }))
}

/// Booking PR-AUC over per-token conversion rows, and micro PR-AUC over the
/// flattened (example, filter) engagement grid.
fn eval_aucs(
    params: &ModelParams,
    schema: &FeatureSchema,
    eval_set: &[TrainingExample],
) -> (Option<f64>, Option<f64>) {
    if eval_set.is_empty() {
        return (None, None);
    }
    let mut book_scores = Vec::new();
    let mut book_labels = Vec::new();
    let mut eng_scores = Vec::new();
    let mut eng_labels = Vec::new();
    for ex in eval_set {
        let Ok(preds) = super::predict_query(params, schema, &ex.query) else {
            return (None, None);
        };
        for t in conversion_tokens(ex, params.k) {
            let p = if t == none_token(params.k) {
                preds.booking_none
            } else {
                preds.booking_per_filter[t]
            };
            book_scores.push(p);
            book_labels.push(ex.booking_label);
        }
        for (f, &y) in ex.engagement_labels.iter().enumerate() {
            eng_scores.push(preds.engagement[f]);
            eng_labels.push(y);
        }
    }
    (
        crate::eval::pr_auc(&book_scores, &book_labels).ok(),
        crate::eval::pr_auc(&eng_scores, &eng_labels).ok(),
    )
}

/// Compare analytic gradients with central finite differences of the full
/// example loss over a random sample of parameters. Returns the maximum
/// relative error; deterministic per seed.
pub fn gradient_check(
    params: &ModelParams,
    schema: &FeatureSchema,
    example: &TrainingExample,
    weights: (f64, f64),
    epsilon: f64,
    num_samples: usize,
    seed: u64,
) -> Result<f64> {
    if !(1e-6..=1e-3).contains(&epsilon) {
        return Err(CoreError::InvalidConfig(format!(
            "epsilon must be in [1e-6, 1e-3], got {epsilon}"
        )));
    }

    let mut analytic = params.tensors.zeros_like();
    backprop_example(params, schema, example, weights, &mut analytic)?;

    let total = params.tensors.num_parameters();
    let n = num_samples.min(total);
    let mut pick = rng::stream(seed, 0x9C);
    let mut indices: Vec<usize> = (0..total).collect();
    indices.shuffle(&mut pick);
    indices.truncate(n);

    let mut probe = params.clone();
    let mut max_rel = 0.0f64;
    for flat in indices {
        let a = flat_get(&analytic, flat);
        let base = flat_get(&probe.tensors, flat);

        flat_set(&mut probe.tensors, flat, base + epsilon);
        let plus = example_loss(&probe, schema, example, weights)?;
        flat_set(&mut probe.tensors, flat, base - epsilon);
        let minus = example_loss(&probe, schema, example, weights)?;
        flat_set(&mut probe.tensors, flat, base);

        let numeric = (plus - minus) / (2.0 * epsilon);
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-5);
        max_rel = max_rel.max(rel);
    }
    Ok(max_rel)
}

fn flat_get(tensors: &TensorSet, mut idx: usize) -> f64 {
    for (_, slice) in tensors.slices() {
        if idx < slice.len() {
            return slice[idx];
        }
        idx -= slice.len();
    }
    panic!("flat index out of range");
}

fn flat_set(tensors: &mut TensorSet, mut idx: usize, value: f64) {
    for (_, slice) in tensors.slices_mut() {
        if idx < slice.len() {
            slice[idx] = value;
            return;
        }
        idx -= slice.len();
    }
    panic!("flat index out of range");
}
