//! Serving-time ranking: combine the two model outputs into
//! `p_engage * p_book^N` and apply inventory post-processing.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::features::FeatureSchema;
use crate::model::{predict_query, ModelParams};
use crate::query::Query;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankingConfig {
    /// Exponent on the conversion term; larger values weight conversion over
    /// (presentation-biased) engagement.
    pub conversion_weight_exponent: f64,
    pub top_k: usize,
    /// Candidates whose facet count falls below this are dropped.
    pub min_inventory: u32,
}

impl Default for RankingConfig {
    fn default() -> Self {
        Self {
            conversion_weight_exponent: 2.0,
            top_k: 6,
            min_inventory: 18,
        }
    }
}

impl RankingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.conversion_weight_exponent <= 0.0 {
            return Err(CoreError::InvalidConfig(
                "conversion_weight_exponent must be > 0".into(),
            ));
        }
        if self.top_k == 0 {
            return Err(CoreError::InvalidConfig("top_k must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFilter {
    pub filter_id: usize,
    pub score: f64,
    pub p_engage: f64,
    pub p_book: f64,
    pub post_filter_inventory: u32,
}

/// Recommendations in score order, ties broken by ascending filter id.
pub type RankedFilters = Vec<RankedFilter>;

/// `p_engage * p_book^exponent`; stays in [0, 1] for inputs in [0, 1].
pub fn ranking_score(p_engage: f64, p_book: f64, exponent: f64) -> f64 {
    p_engage * p_book.powf(exponent)
}

/// Score every candidate filter for a query and return the top ranked ones.
///
/// Already-applied filters are not candidates, and no filter that would leave
/// fewer than `min_inventory` results is ever returned; a count exactly at
/// the threshold stays eligible. An empty list is a valid outcome.
pub fn recommend(
    params: &ModelParams,
    schema: &FeatureSchema,
    query: &Query,
    applied_filters: &[usize],
    facet_counts: &[u32],
    cfg: &RankingConfig,
) -> Result<RankedFilters> {
    cfg.validate()?;
    let k = params.k;
    if facet_counts.len() != k {
        return Err(CoreError::ShapeMismatch(format!(
            "facet_counts has {} entries, catalog has {k}",
            facet_counts.len()
        )));
    }
    if let Some(&bad) = applied_filters.iter().find(|&&f| f >= k) {
        return Err(CoreError::InvalidFilter { id: bad, k });
    }

    let preds = predict_query(params, schema, query)?;
    let mut ranked: RankedFilters = (0..k)
        .filter(|f| !applied_filters.contains(f))
        .filter(|&f| facet_counts[f] >= cfg.min_inventory)
        .map(|f| {
            let p_engage = preds.engagement[f];
            let p_book = preds.booking_per_filter[f];
            RankedFilter {
                filter_id: f,
                score: ranking_score(p_engage, p_book, cfg.conversion_weight_exponent),
                p_engage,
                p_book,
                post_filter_inventory: facet_counts[f],
            }
        })
        .collect();

    ranked.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("scores are finite")
            .then(a.filter_id.cmp(&b.filter_id))
    });
    ranked.truncate(cfg.top_k);
    Ok(ranked)
}
