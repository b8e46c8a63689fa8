//! Booking-task comparison of the three predictor families on a shared row
//! set: one row per (search, applied filter), with an explicit no-filter row
//! for searches without filters.

use serde::{Deserialize, Serialize};

use crate::baselines::{FcrPredictor, NecessityPredictor};
use crate::error::Result;
use crate::events::TrainingExample;
use crate::features::{none_token, FeatureSchema};
use crate::model::{predict_query, ModelParams};

use super::pr_auc;

/// One scored row of the booking task.
#[derive(Debug, Clone)]
pub struct ConversionRow {
    pub example_idx: usize,
    /// Filter id, or `k` for the no-filter token.
    pub token: usize,
    pub label: u8,
}

/// Expand eval examples into conversion rows shared by all predictors.
pub fn conversion_rows(examples: &[TrainingExample], k: usize) -> Vec<ConversionRow> {
    let mut rows = Vec::new();
    for (i, ex) in examples.iter().enumerate() {
        let applied = ex.filters.applied_ids();
        if applied.is_empty() {
            rows.push(ConversionRow { example_idx: i, token: none_token(k), label: ex.booking_label });
        } else {
            for f in applied {
                rows.push(ConversionRow { example_idx: i, token: f, label: ex.booking_label });
            }
        }
    }
    rows
}

/// Model-based scores for the shared rows.
pub fn ml_scores(
    params: &ModelParams,
    schema: &FeatureSchema,
    examples: &[TrainingExample],
    rows: &[ConversionRow],
) -> Result<Vec<f64>> {
    // one trunk pass per example, reused across its rows
    let mut cached: Vec<Option<crate::model::QueryPredictions>> = vec![None; examples.len()];
    let mut scores = Vec::with_capacity(rows.len());
    for row in rows {
        if cached[row.example_idx].is_none() {
            cached[row.example_idx] =
                Some(predict_query(params, schema, &examples[row.example_idx].query)?);
        }
        let preds = cached[row.example_idx].as_ref().expect("just filled");
        let s = if row.token == none_token(params.k) {
            preds.booking_none
        } else {
            preds.booking_per_filter[row.token]
        };
        scores.push(s);
    }
    Ok(scores)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictorResult {
    pub name: String,
    pub booking_pr_auc: f64,
    /// Relative improvement over the first (baseline) predictor.
    pub improvement_vs_baseline: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareReport {
    pub num_rows: usize,
    pub positive_rate: f64,
    /// Ordered: necessity baseline, statistics, then the model.
    pub predictors: Vec<PredictorResult>,
}

/// PR-AUC of necessity, FCR statistics and the trained model on the booking
/// task, plus relative improvements over the necessity baseline.
pub fn compare_predictors(
    eval_set: &[TrainingExample],
    necessity: &NecessityPredictor,
    fcr: &FcrPredictor,
    params: &ModelParams,
    schema: &FeatureSchema,
) -> Result<CompareReport> {
    let k = params.k;
    let rows = conversion_rows(eval_set, k);
    let labels: Vec<u8> = rows.iter().map(|r| r.label).collect();

    let necessity_scores: Vec<f64> = rows
        .iter()
        .map(|r| necessity.score(eval_set[r.example_idx].query.location_id, r.token))
        .collect();
    let fcr_scores: Vec<f64> = rows
        .iter()
        .map(|r| fcr.score(eval_set[r.example_idx].query.location_id, r.token))
        .collect();
    let model_scores = ml_scores(params, schema, eval_set, &rows)?;

    let baseline_auc = pr_auc(&necessity_scores, &labels)?;
    let mut predictors = vec![PredictorResult {
        name: "necessity".into(),
        booking_pr_auc: baseline_auc,
        improvement_vs_baseline: 0.0,
    }];
    for (name, scores) in [("fcr_statistics", &fcr_scores), ("ml_model", &model_scores)] {
        let auc = pr_auc(scores, &labels)?;
        predictors.push(PredictorResult {
            name: name.into(),
            booking_pr_auc: auc,
            improvement_vs_baseline: auc / baseline_auc - 1.0,
        });
    }

    let positives = labels.iter().filter(|&&y| y == 1).count();
    Ok(CompareReport {
        num_rows: rows.len(),
        positive_rate: positives as f64 / rows.len() as f64,
        predictors,
    })
}
