//! Multi-task network: a shared MLP trunk over the query encoding, an
//! engagement head emitting one logit per filter, and a conversion head that
//! scores (query, filter) pairs through a filter embedding.
//!
//! The network is small enough that training runs from scratch with manual
//! backprop in 64-bit floats; analytic gradients are verified against central
//! finite differences in [`gradient_check`].

mod store;
mod train;

pub use store::{load, save, FORMAT_VERSION};
pub use train::{gradient_check, loss, train, EpochStats, TrainReport};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::features::{none_token, EncodedFeatures, FeatureSchema, FILTER_EMBEDDING_DIM};
use crate::query::Query;
use crate::rng;

pub(crate) fn sigmoid(z: f64) -> f64 {
    // Guard the open-interval contract against saturated logits.
    (1.0 / (1.0 + (-z).exp())).clamp(1e-12, 1.0 - 1e-12)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden_sizes: Vec<usize>,
    /// (engagement, booking) loss weights in the joint objective.
    pub loss_weights: (f64, f64),
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![64, 32],
            loss_weights: (1.0, 1.0),
            learning_rate: 1e-3,
            epochs: 15,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_sizes.is_empty() || self.hidden_sizes.iter().any(|&h| h == 0) {
            return Err(CoreError::InvalidConfig("hidden sizes must be positive".into()));
        }
        let (we, wb) = self.loss_weights;
        if we < 0.0 || wb < 0.0 || (we == 0.0 && wb == 0.0) {
            return Err(CoreError::InvalidConfig(
                "loss weights must be >= 0 and not both zero".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(CoreError::InvalidConfig("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Dense row-major matrix; `rows` is the output dimension of a linear map.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    fn uniform(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let data = (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect();
        Self { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// out += W x
    fn matvec_add(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for r in 0..self.rows {
            let row = self.row(r);
            let mut acc = 0.0;
            for (w, xv) in row.iter().zip(x) {
                acc += w * xv;
            }
            out[r] += acc;
        }
    }

    /// dx += W^T dy
    fn matvec_transpose_add(&self, dy: &[f64], dx: &mut [f64]) {
        for r in 0..self.rows {
            let d = dy[r];
            if d == 0.0 {
                continue;
            }
            for (g, w) in dx.iter_mut().zip(self.row(r)) {
                *g += w * d;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl Linear {
    fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self { w: Matrix::zeros(out_dim, in_dim), b: vec![0.0; out_dim] }
    }

    fn init(out_dim: usize, in_dim: usize, rng: &mut impl Rng) -> Self {
        let scale = 1.0 / (in_dim as f64).sqrt();
        Self {
            w: Matrix::uniform(out_dim, in_dim, scale, rng),
            b: vec![0.0; out_dim],
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.b.clone();
        self.w.matvec_add(x, &mut out);
        out
    }
}

/// Every learnable tensor of the model. A zeroed copy of the same shape
/// doubles as the gradient buffer and the Adam moment buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSet {
    /// One embedding table per categorical feature, in schema order.
    pub embeddings: Vec<Matrix>,
    /// (k + 1) x dim table; row k is the no-filter token.
    pub filter_embedding: Matrix,
    pub trunk: Vec<Linear>,
    pub engagement_head: Linear,
    pub conversion_head: Linear,
}

impl TensorSet {
    pub fn zeros_like(&self) -> TensorSet {
        TensorSet {
            embeddings: self
                .embeddings
                .iter()
                .map(|m| Matrix::zeros(m.rows, m.cols))
                .collect(),
            filter_embedding: Matrix::zeros(
                self.filter_embedding.rows,
                self.filter_embedding.cols,
            ),
            trunk: self
                .trunk
                .iter()
                .map(|l| Linear::zeros(l.w.rows, l.w.cols))
                .collect(),
            engagement_head: Linear::zeros(
                self.engagement_head.w.rows,
                self.engagement_head.w.cols,
            ),
            conversion_head: Linear::zeros(
                self.conversion_head.w.rows,
                self.conversion_head.w.cols,
            ),
        }
    }

    pub fn zero(&mut self) {
        for (_, slice) in self.slices_mut() {
            slice.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Named flat views over every tensor, in a stable order.
    pub fn slices(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        for (i, m) in self.embeddings.iter().enumerate() {
            out.push((format!("embedding_{i}"), m.data.as_slice()));
        }
        out.push(("filter_embedding".into(), self.filter_embedding.data.as_slice()));
        for (i, l) in self.trunk.iter().enumerate() {
            out.push((format!("trunk_{i}_w"), l.w.data.as_slice()));
            out.push((format!("trunk_{i}_b"), l.b.as_slice()));
        }
        out.push(("engagement_w".into(), self.engagement_head.w.data.as_slice()));
        out.push(("engagement_b".into(), self.engagement_head.b.as_slice()));
        out.push(("conversion_w".into(), self.conversion_head.w.data.as_slice()));
        out.push(("conversion_b".into(), self.conversion_head.b.as_slice()));
        out
    }

    pub fn slices_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        for (i, m) in self.embeddings.iter_mut().enumerate() {
            out.push((format!("embedding_{i}"), m.data.as_mut_slice()));
        }
        out.push((
            "filter_embedding".into(),
            self.filter_embedding.data.as_mut_slice(),
        ));
        for (i, l) in self.trunk.iter_mut().enumerate() {
            out.push((format!("trunk_{i}_w"), l.w.data.as_mut_slice()));
            out.push((format!("trunk_{i}_b"), l.b.as_mut_slice()));
        }
        out.push(("engagement_w".into(), self.engagement_head.w.data.as_mut_slice()));
        out.push(("engagement_b".into(), self.engagement_head.b.as_mut_slice()));
        out.push(("conversion_w".into(), self.conversion_head.w.data.as_mut_slice()));
        out.push(("conversion_b".into(), self.conversion_head.b.as_mut_slice()));
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.slices().iter().map(|(_, s)| s.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub k: usize,
    pub hidden_sizes: Vec<usize>,
    /// Hash of the schema this model was built against; checked at load time.
    pub schema_hash: [u8; 32],
    pub tensors: TensorSet,
}

/// Output of one forward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionPair {
    pub engagement_probs: Vec<f64>,
    pub booking_prob: f64,
}

/// Initialize parameters: fan-in-scaled uniform weights, zero biases,
/// deterministic per seed.
pub fn init(config: &ModelConfig, schema: &FeatureSchema, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let k = schema.k;
    let mut r = rng::stream(seed, 0x1217);

    let embeddings = schema
        .categorical
        .iter()
        .map(|c| {
            let scale = 1.0 / (c.embedding_dim as f64).sqrt();
            Matrix::uniform(c.cardinality(), c.embedding_dim, scale, &mut r)
        })
        .collect();
    let filter_scale = 1.0 / (FILTER_EMBEDDING_DIM as f64).sqrt();
    let filter_embedding = Matrix::uniform(
        schema.filter_vocab_size(),
        FILTER_EMBEDDING_DIM,
        filter_scale,
        &mut r,
    );

    let mut trunk = Vec::new();
    let mut in_dim = schema.trunk_input_len();
    for &h in &config.hidden_sizes {
        trunk.push(Linear::init(h, in_dim, &mut r));
        in_dim = h;
    }
    let trunk_out = in_dim;
    let engagement_head = Linear::init(k, trunk_out, &mut r);
    let conversion_head = Linear::init(1, trunk_out + FILTER_EMBEDDING_DIM, &mut r);

    Ok(ModelParams {
        k,
        hidden_sizes: config.hidden_sizes.clone(),
        schema_hash: schema.content_hash(),
        tensors: TensorSet {
            embeddings,
            filter_embedding,
            trunk,
            engagement_head,
            conversion_head,
        },
    })
}

/// Per-example forward activations kept for backprop.
pub(crate) struct ForwardCache {
    /// Assembled trunk input: concatenated embedding rows then dense values.
    pub input: Vec<f64>,
    /// Post-ReLU activations per trunk layer; last entry is the trunk output.
    pub activations: Vec<Vec<f64>>,
}

pub(crate) fn assemble_input(tensors: &TensorSet, encoded: &EncodedFeatures) -> Result<Vec<f64>> {
    if encoded.categorical_indices.len() != tensors.embeddings.len() {
        return Err(CoreError::ShapeMismatch(format!(
            "{} categorical indices vs {} embedding tables",
            encoded.categorical_indices.len(),
            tensors.embeddings.len()
        )));
    }
    let mut input = Vec::new();
    for (idx, table) in encoded.categorical_indices.iter().zip(&tensors.embeddings) {
        if *idx >= table.rows {
            return Err(CoreError::ShapeMismatch(format!(
                "categorical index {idx} out of range {}",
                table.rows
            )));
        }
        input.extend_from_slice(table.row(*idx));
    }
    input.extend_from_slice(&encoded.dense);
    if input.len() != tensors.trunk[0].w.cols {
        return Err(CoreError::ShapeMismatch(format!(
            "trunk expects input of {}, encoding has {}",
            tensors.trunk[0].w.cols,
            input.len()
        )));
    }
    Ok(input)
}

pub(crate) fn trunk_forward(
    tensors: &TensorSet,
    encoded: &EncodedFeatures,
) -> Result<ForwardCache> {
    let input = assemble_input(tensors, encoded)?;
    let mut activations = Vec::with_capacity(tensors.trunk.len());
    let mut h = input.clone();
    for layer in &tensors.trunk {
        let mut a = layer.forward(&h);
        a.iter_mut().for_each(|v| *v = v.max(0.0));
        h.clone_from(&a);
        activations.push(a);
    }
    Ok(ForwardCache { input, activations })
}

pub(crate) fn conversion_logit(tensors: &TensorSet, trunk_out: &[f64], token: usize) -> f64 {
    let head = &tensors.conversion_head;
    let emb = tensors.filter_embedding.row(token);
    let row = head.w.row(0);
    let mut z = head.b[0];
    for (w, v) in row.iter().zip(trunk_out.iter().chain(emb)) {
        z += w * v;
    }
    z
}

/// Pure forward pass. The engagement head ignores the filter token; the
/// conversion head scores it (an absent token means the no-filter token).
pub fn forward(params: &ModelParams, encoded: &EncodedFeatures) -> Result<PredictionPair> {
    let token = encoded.filter_index.unwrap_or(none_token(params.k));
    if token >= params.tensors.filter_embedding.rows {
        return Err(CoreError::ShapeMismatch(format!(
            "filter token {token} out of range {}",
            params.tensors.filter_embedding.rows
        )));
    }
    let cache = trunk_forward(&params.tensors, encoded)?;
    let trunk_out = cache.activations.last().expect("trunk has layers");

    let engagement_probs = params
        .tensors
        .engagement_head
        .forward(trunk_out)
        .into_iter()
        .map(sigmoid)
        .collect();
    let booking_prob = sigmoid(conversion_logit(&params.tensors, trunk_out, token));
    Ok(PredictionPair { engagement_probs, booking_prob })
}

/// All predictions a ranker needs for one query: engagement probabilities for
/// every filter plus conversion probabilities for every filter token and for
/// the no-filter token, sharing one trunk pass.
#[derive(Debug, Clone)]
pub struct QueryPredictions {
    pub engagement: Vec<f64>,
    pub booking_per_filter: Vec<f64>,
    pub booking_none: f64,
}

pub fn predict_query(
    params: &ModelParams,
    schema: &FeatureSchema,
    query: &Query,
) -> Result<QueryPredictions> {
    let encoded = crate::features::encode(query, schema, None);
    let cache = trunk_forward(&params.tensors, &encoded)?;
    let trunk_out = cache.activations.last().expect("trunk has layers");
    let engagement = params
        .tensors
        .engagement_head
        .forward(trunk_out)
        .into_iter()
        .map(sigmoid)
        .collect();
    let booking_per_filter = (0..params.k)
        .map(|f| sigmoid(conversion_logit(&params.tensors, trunk_out, f)))
        .collect();
    let booking_none = sigmoid(conversion_logit(
        &params.tensors,
        trunk_out,
        none_token(params.k),
    ));
    Ok(QueryPredictions { engagement, booking_per_filter, booking_none })
}

#[cfg(test)]
pub(crate) mod test_fixtures {
    use super::*;
    use crate::catalog::FilterVector;
    use crate::events::TrainingExample;
    use crate::features::fit_schema;

    pub fn example(location: u64, seed: u64) -> TrainingExample {
        let ci: chrono::NaiveDate = "2025-05-01".parse().unwrap();
        let applied = seed % 3;
        let mut bits = vec![0u8; 4];
        if applied > 0 {
            bits[(seed % 4) as usize] = 1;
        }
        if applied == 2 {
            bits[((seed + 1) % 4) as usize] = 1;
        }
        TrainingExample {
            user_id: seed,
            search_id: seed,
            query: Query {
                location_id: location,
                num_adults: 1 + (seed % 3) as u32,
                num_children: (seed % 2) as u32,
                num_infants: 0,
                checkin_date: ci + chrono::Days::new(seed % 20),
                checkout_date: ci + chrono::Days::new(seed % 20 + 1 + seed % 5),
                platform: if seed % 2 == 0 { "web".into() } else { "ios".into() },
                device_type: "desktop".into(),
                search_timestamp: ci - chrono::Days::new(3),
            },
            filters: FilterVector { bits: bits.clone() },
            engagement_labels: bits,
            booking_label: (seed % 5 == 0) as u8,
            weight: 1.0,
        }
    }

    pub fn schema() -> FeatureSchema {
        let exs: Vec<_> = (0..10).map(|i| example(i % 3, i)).collect();
        fit_schema(&exs, 4).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::test_fixtures::{example, schema};
    use super::*;
    use crate::features::encode;

    #[test]
    fn init_is_deterministic_per_seed() {
        let schema = schema();
        let cfg = ModelConfig::default();
        let a = init(&cfg, &schema, 3).unwrap();
        let b = init(&cfg, &schema, 3).unwrap();
        assert_eq!(a, b);
        let c = init(&cfg, &schema, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn engagement_head_has_k_outputs() {
        let schema = schema();
        let params = init(&ModelConfig::default(), &schema, 0).unwrap();
        assert_eq!(params.tensors.engagement_head.w.rows, 4);
        let enc = encode(&example(0, 1).query, &schema, None);
        let pred = forward(&params, &enc).unwrap();
        assert_eq!(pred.engagement_probs.len(), 4);
    }

    #[test]
    fn zero_input_forward_is_one_half() {
        let schema = schema();
        let mut params = init(&ModelConfig::default(), &schema, 0).unwrap();
        // Zero every embedding so the assembled input is all zeros; with zero
        // biases every logit is exactly 0 and every sigmoid exactly 0.5.
        for table in &mut params.tensors.embeddings {
            table.data.iter_mut().for_each(|v| *v = 0.0);
        }
        params
            .tensors
            .filter_embedding
            .data
            .iter_mut()
            .for_each(|v| *v = 0.0);
        let mut enc = encode(&example(0, 1).query, &schema, None);
        enc.dense.iter_mut().for_each(|v| *v = 0.0);
        let pred = forward(&params, &enc).unwrap();
        assert!((pred.booking_prob - 0.5).abs() < 1e-12);
        for p in pred.engagement_probs {
            assert!((p - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn outputs_stay_in_open_unit_interval() {
        let schema = schema();
        let params = init(&ModelConfig::default(), &schema, 0).unwrap();
        let mut r = crate::rng::root(5);
        use rand::Rng as _;
        for i in 0..10_000u64 {
            let mut enc = encode(&example(i % 5, i).query, &schema, Some((i % 5) as usize));
            enc.dense.iter_mut().for_each(|v| *v += r.gen_range(-3.0..3.0));
            let pred = forward(&params, &enc).unwrap();
            assert!(pred.booking_prob > 0.0 && pred.booking_prob < 1.0);
            assert!(pred
                .engagement_probs
                .iter()
                .all(|&p| p > 0.0 && p < 1.0 && p.is_finite()));
        }
    }

    #[test]
    fn filter_token_moves_booking_not_engagement() {
        let schema = schema();
        let params = init(&ModelConfig::default(), &schema, 0).unwrap();
        let q = example(0, 1).query;
        let a = forward(&params, &encode(&q, &schema, Some(0))).unwrap();
        let b = forward(&params, &encode(&q, &schema, Some(3))).unwrap();
        assert_eq!(a.engagement_probs, b.engagement_probs);
        assert_ne!(a.booking_prob, b.booking_prob);
    }

    #[test]
    fn predict_query_matches_forward() {
        let schema = schema();
        let params = init(&ModelConfig::default(), &schema, 0).unwrap();
        let q = example(2, 9).query;
        let preds = predict_query(&params, &schema, &q).unwrap();
        for f in 0..4 {
            let pair = forward(&params, &encode(&q, &schema, Some(f))).unwrap();
            assert_eq!(preds.booking_per_filter[f], pair.booking_prob);
            assert_eq!(preds.engagement, pair.engagement_probs);
        }
        let none = forward(&params, &encode(&q, &schema, None)).unwrap();
        assert_eq!(preds.booking_none, none.booking_prob);
    }

    #[test]
    fn mismatched_encoding_is_an_error() {
        let schema = schema();
        let params = init(&ModelConfig::default(), &schema, 0).unwrap();
        let mut enc = encode(&example(0, 1).query, &schema, None);
        enc.dense.push(0.0);
        assert!(forward(&params, &enc).is_err());
        let mut enc2 = encode(&example(0, 1).query, &schema, None);
        enc2.categorical_indices.pop();
        assert!(forward(&params, &enc2).is_err());
    }
}
