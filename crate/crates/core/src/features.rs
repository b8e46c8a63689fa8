//! Feature schema and query encoding.
//!
//! The model consumes three feature kinds: categorical values mapped to
//! embedding indices (with a reserved out-of-vocabulary index 0), z-scored
//! continuous values, and cyclical calendar values encoded as
//! (sin 2πx/P, cos 2πx/P) pairs. Normalization statistics and vocabularies
//! are fit on the training split once and never mutated afterwards.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CoreError, Result};
use crate::events::TrainingExample;
use crate::query::Query;

/// Ablatable feature groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    Location,
    Dates,
    GuestCounts,
    PlatformDevice,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 4] = [
        FeatureGroup::Location,
        FeatureGroup::Dates,
        FeatureGroup::GuestCounts,
        FeatureGroup::PlatformDevice,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            FeatureGroup::Location => "location",
            FeatureGroup::Dates => "dates",
            FeatureGroup::GuestCounts => "guest_counts",
            FeatureGroup::PlatformDevice => "platform_device",
        }
    }
}

/// Index 0 of every categorical vocabulary is the out-of-vocabulary bucket.
pub const OOV_INDEX: usize = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalFeature {
    pub name: String,
    pub vocab: BTreeMap<String, usize>,
    pub embedding_dim: usize,
}

impl CategoricalFeature {
    /// Vocabulary size including the OOV bucket.
    pub fn cardinality(&self) -> usize {
        self.vocab.len() + 1
    }

    pub fn index_of(&self, value: &str) -> usize {
        self.vocab.get(value).copied().unwrap_or(OOV_INDEX)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousFeature {
    pub name: String,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CyclicalFeature {
    pub name: String,
    pub period: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub categorical: Vec<CategoricalFeature>,
    pub continuous: Vec<ContinuousFeature>,
    pub cyclical: Vec<CyclicalFeature>,
    /// Catalog size; the conversion head's filter vocabulary is `k + 1`
    /// (dense ids plus the explicit no-filter token).
    pub k: usize,
}

/// Embedding width for the filter-id feature of the conversion head.
pub const FILTER_EMBEDDING_DIM: usize = 8;

/// The explicit token used for conversion rows of no-filter searches.
pub const fn none_token(k: usize) -> usize {
    k
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedFeatures {
    pub categorical_indices: Vec<usize>,
    pub dense: Vec<f64>,
    /// Filter token for the conversion head; `None` encodes the no-filter
    /// token implicitly at forward time.
    pub filter_index: Option<usize>,
}

type CatExtract = fn(&Query) -> String;
type NumExtract = fn(&Query) -> f64;

const CATEGORICAL_SPECS: &[(&str, CatExtract, usize, FeatureGroup)] = &[
    ("location", |q| q.location_id.to_string(), 16, FeatureGroup::Location),
    ("platform", |q| q.platform.clone(), 4, FeatureGroup::PlatformDevice),
    ("device_type", |q| q.device_type.clone(), 4, FeatureGroup::PlatformDevice),
];

const CONTINUOUS_SPECS: &[(&str, NumExtract, FeatureGroup)] = &[
    ("num_adults", |q| q.num_adults as f64, FeatureGroup::GuestCounts),
    ("num_children", |q| q.num_children as f64, FeatureGroup::GuestCounts),
    ("num_infants", |q| q.num_infants as f64, FeatureGroup::GuestCounts),
    ("num_nights", |q| q.num_nights() as f64, FeatureGroup::Dates),
    ("lead_time_days", |q| q.lead_time_days() as f64, FeatureGroup::Dates),
];

// Day-of-month uses a constant period of 31, accepting slight distortion in
// short months.
const CYCLICAL_SPECS: &[(&str, NumExtract, f64, FeatureGroup)] = &[
    ("checkin_month", |q| Query::calendar_parts(q.checkin_date).0 as f64, 12.0, FeatureGroup::Dates),
    ("checkin_day_of_month", |q| Query::calendar_parts(q.checkin_date).1 as f64, 31.0, FeatureGroup::Dates),
    ("checkin_day_of_week", |q| Query::calendar_parts(q.checkin_date).2 as f64, 7.0, FeatureGroup::Dates),
    ("checkout_month", |q| Query::calendar_parts(q.checkout_date).0 as f64, 12.0, FeatureGroup::Dates),
    ("checkout_day_of_month", |q| Query::calendar_parts(q.checkout_date).1 as f64, 31.0, FeatureGroup::Dates),
    ("checkout_day_of_week", |q| Query::calendar_parts(q.checkout_date).2 as f64, 7.0, FeatureGroup::Dates),
];

fn cat_extract(name: &str) -> CatExtract {
    CATEGORICAL_SPECS
        .iter()
        .find(|(n, ..)| *n == name)
        .map(|(_, f, ..)| *f)
        .expect("unknown categorical feature in schema")
}

fn cont_extract(name: &str) -> NumExtract {
    CONTINUOUS_SPECS
        .iter()
        .find(|(n, ..)| *n == name)
        .map(|(_, f, ..)| *f)
        .expect("unknown continuous feature in schema")
}

fn cyc_extract(name: &str) -> NumExtract {
    CYCLICAL_SPECS
        .iter()
        .find(|(n, ..)| *n == name)
        .map(|(_, f, ..)| *f)
        .expect("unknown cyclical feature in schema")
}

/// Encode one cyclical value onto the unit circle.
pub fn encode_cyclical(x: f64, period: f64) -> Result<(f64, f64)> {
    if period <= 0.0 {
        return Err(CoreError::InvalidConfig(format!(
            "cyclical period must be positive, got {period}"
        )));
    }
    let angle = 2.0 * std::f64::consts::PI * x / period;
    Ok((angle.sin(), angle.cos()))
}

impl FeatureSchema {
    /// Width of the dense part of the encoding.
    pub fn dense_len(&self) -> usize {
        self.continuous.len() + 2 * self.cyclical.len()
    }

    /// Total input width of the trunk: embeddings plus dense features.
    pub fn trunk_input_len(&self) -> usize {
        self.categorical.iter().map(|c| c.embedding_dim).sum::<usize>() + self.dense_len()
    }

    pub fn filter_vocab_size(&self) -> usize {
        self.k + 1
    }

    /// Stable content hash used to pair model weights with the schema that
    /// produced their input layout.
    pub fn content_hash(&self) -> [u8; 32] {
        let json = serde_json::to_vec(self).expect("schema serializes");
        let mut hasher = Sha256::new();
        hasher.update(&json);
        hasher.finalize().into()
    }
}

/// Fit vocabularies and normalization statistics on the training split.
pub fn fit_schema(examples: &[TrainingExample], k: usize) -> Result<FeatureSchema> {
    fit_schema_without(examples, k, &[])
}

/// Fit a schema with one or more feature groups removed entirely.
pub fn fit_schema_without(
    examples: &[TrainingExample],
    k: usize,
    excluded: &[FeatureGroup],
) -> Result<FeatureSchema> {
    if examples.is_empty() {
        return Err(CoreError::EmptyInput("cannot fit a schema on no examples".into()));
    }
    let keep = |g: FeatureGroup| !excluded.contains(&g);

    let categorical = CATEGORICAL_SPECS
        .iter()
        .filter(|(.., g)| keep(*g))
        .map(|(name, extract, dim, _)| {
            let mut vocab: BTreeMap<String, usize> = BTreeMap::new();
            for ex in examples {
                let key = extract(&ex.query);
                let next = vocab.len() + 1; // 0 is reserved for OOV
                vocab.entry(key).or_insert(next);
            }
            CategoricalFeature {
                name: name.to_string(),
                vocab,
                embedding_dim: *dim,
            }
        })
        .collect();

    let n = examples.len() as f64;
    let continuous = CONTINUOUS_SPECS
        .iter()
        .filter(|(.., g)| keep(*g))
        .map(|(name, extract, _)| {
            let mean = examples.iter().map(|ex| extract(&ex.query)).sum::<f64>() / n;
            let var = examples
                .iter()
                .map(|ex| {
                    let d = extract(&ex.query) - mean;
                    d * d
                })
                .sum::<f64>()
                / n;
            let std = var.sqrt();
            ContinuousFeature {
                name: name.to_string(),
                mean,
                std: if std < 1e-12 { 1.0 } else { std },
            }
        })
        .collect();

    let cyclical = CYCLICAL_SPECS
        .iter()
        .filter(|(.., g)| keep(*g))
        .map(|(name, _, period, _)| CyclicalFeature {
            name: name.to_string(),
            period: *period,
        })
        .collect();

    Ok(FeatureSchema { categorical, continuous, cyclical, k })
}

/// Encode a query against a frozen schema. Total: every valid query encodes;
/// unseen categorical values land in the OOV bucket.
pub fn encode(query: &Query, schema: &FeatureSchema, filter_id: Option<usize>) -> EncodedFeatures {
    let categorical_indices = schema
        .categorical
        .iter()
        .map(|c| c.index_of(&cat_extract(&c.name)(query)))
        .collect();

    let mut dense = Vec::with_capacity(schema.dense_len());
    for c in &schema.continuous {
        dense.push((cont_extract(&c.name)(query) - c.mean) / c.std);
    }
    for c in &schema.cyclical {
        let (s, co) = encode_cyclical(cyc_extract(&c.name)(query), c.period)
            .expect("schema periods are positive");
        dense.push(s);
        dense.push(co);
    }

    EncodedFeatures {
        categorical_indices,
        dense,
        filter_index: filter_id,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::FilterVector;

    fn query(location: u64, checkin: &str, nights: u64) -> Query {
        let ci: chrono::NaiveDate = checkin.parse().unwrap();
        Query {
            location_id: location,
            num_adults: 2,
            num_children: 1,
            num_infants: 0,
            checkin_date: ci,
            checkout_date: ci + chrono::Days::new(nights),
            platform: "web".into(),
            device_type: "desktop".into(),
            search_timestamp: ci - chrono::Days::new(7),
        }
    }

    fn example(location: u64, checkin: &str, nights: u64) -> TrainingExample {
        TrainingExample {
            user_id: location,
            search_id: 0,
            query: query(location, checkin, nights),
            filters: FilterVector::none(4),
            engagement_labels: vec![0; 4],
            booking_label: 0,
            weight: 1.0,
        }
    }

    #[test]
    fn cyclical_quarter_points() {
        let (s, c) = encode_cyclical(0.0, 12.0).unwrap();
        assert!(s.abs() < 1e-12 && (c - 1.0).abs() < 1e-12);
        let (s, c) = encode_cyclical(3.0, 12.0).unwrap();
        assert!((s - 1.0).abs() < 1e-12 && c.abs() < 1e-12);
        let (s, c) = encode_cyclical(6.0, 12.0).unwrap();
        assert!(s.abs() < 1e-12 && (c + 1.0).abs() < 1e-12);
        assert!(encode_cyclical(1.0, 0.0).is_err());
        assert!(encode_cyclical(1.0, -3.0).is_err());
    }

    #[test]
    fn march_checkin_maps_to_unit_circle_east() {
        let exs = vec![example(1, "2025-03-15", 2)];
        let schema = fit_schema(&exs, 4).unwrap();
        let enc = encode(&exs[0].query, &schema, None);
        // first cyclical pair is checkin month (March = 3, period 12)
        let base = schema.continuous.len();
        assert!((enc.dense[base] - 1.0).abs() < 1e-12);
        assert!(enc.dense[base + 1].abs() < 1e-12);
    }

    #[test]
    fn constant_feature_gets_unit_std() {
        let exs: Vec<_> = (0..5).map(|i| example(i, "2025-05-01", 3)).collect();
        let schema = fit_schema(&exs, 4).unwrap();
        let adults = schema.continuous.iter().find(|c| c.name == "num_adults").unwrap();
        assert_eq!(adults.mean, 2.0);
        assert_eq!(adults.std, 1.0);
    }

    #[test]
    fn training_column_z_scores_have_zero_mean() {
        let exs: Vec<_> = (0..50)
            .map(|i| example(i % 7, "2025-05-01", 1 + (i % 9) as u64))
            .collect();
        let schema = fit_schema(&exs, 4).unwrap();
        let nights_pos = schema
            .continuous
            .iter()
            .position(|c| c.name == "num_nights")
            .unwrap();
        let mean: f64 = exs
            .iter()
            .map(|ex| encode(&ex.query, &schema, None).dense[nights_pos])
            .sum::<f64>()
            / exs.len() as f64;
        assert!(mean.abs() < 1e-9, "z-score mean {mean}");
    }

    #[test]
    fn unseen_location_goes_to_oov() {
        let exs: Vec<_> = (0..3).map(|i| example(i, "2025-05-01", 2)).collect();
        let schema = fit_schema(&exs, 4).unwrap();
        let enc = encode(&query(99, "2025-05-01", 2), &schema, None);
        assert_eq!(enc.categorical_indices[0], OOV_INDEX);
        let seen = encode(&query(1, "2025-05-01", 2), &schema, None);
        assert_ne!(seen.categorical_indices[0], OOV_INDEX);
    }

    #[test]
    fn encoding_is_deterministic_and_sized() {
        let exs: Vec<_> = (0..3).map(|i| example(i, "2025-05-01", 2)).collect();
        let schema = fit_schema(&exs, 4).unwrap();
        let a = encode(&exs[0].query, &schema, Some(2));
        let b = encode(&exs[0].query, &schema, Some(2));
        assert_eq!(a, b);
        assert_eq!(a.dense.len(), schema.dense_len());
        assert_eq!(a.dense.len(), 5 + 2 * 6);
        assert!(a.dense.iter().all(|v| v.is_finite()));
        assert_eq!(a.filter_index, Some(2));
    }

    #[test]
    fn ablated_schema_drops_whole_groups() {
        let exs: Vec<_> = (0..3).map(|i| example(i, "2025-05-01", 2)).collect();
        let full = fit_schema(&exs, 4).unwrap();
        let no_dates = fit_schema_without(&exs, 4, &[FeatureGroup::Dates]).unwrap();
        assert!(no_dates.cyclical.is_empty());
        assert_eq!(no_dates.continuous.len(), 3); // guest counts only
        assert!(no_dates.trunk_input_len() < full.trunk_input_len());
        let no_loc = fit_schema_without(&exs, 4, &[FeatureGroup::Location]).unwrap();
        assert!(no_loc.categorical.iter().all(|c| c.name != "location"));
    }

    #[test]
    fn schema_hash_tracks_content() {
        let exs: Vec<_> = (0..3).map(|i| example(i, "2025-05-01", 2)).collect();
        let a = fit_schema(&exs, 4).unwrap();
        let mut b = a.clone();
        assert_eq!(a.content_hash(), b.content_hash());
        b.continuous[0].mean += 1.0;
        assert_ne!(a.content_hash(), b.content_hash());
    }
}
