//! Feature ablation: retrain the model with an entire feature group removed
//! and report PR-AUC deltas for both tasks.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::events::TrainingExample;
use crate::features::{fit_schema_without, FeatureGroup};
use crate::model::{train, ModelConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationVariant {
    /// Empty for the full model; otherwise the removed group.
    pub removed_group: Option<String>,
    pub trunk_input_len: usize,
    pub engagement_pr_auc: Option<f64>,
    pub booking_pr_auc: Option<f64>,
    pub engagement_delta_pct: Option<f64>,
    pub booking_delta_pct: Option<f64>,
    pub final_train_loss: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationReport {
    pub variants: Vec<AblationVariant>,
}

impl AblationReport {
    pub fn full(&self) -> &AblationVariant {
        &self.variants[0]
    }

    /// The ablated variant with the largest booking PR-AUC drop.
    pub fn largest_booking_drop(&self) -> Option<&AblationVariant> {
        self.variants[1..]
            .iter()
            .filter(|v| v.booking_delta_pct.is_some())
            .min_by(|a, b| {
                a.booking_delta_pct
                    .partial_cmp(&b.booking_delta_pct)
                    .expect("deltas are finite")
            })
    }
}

/// Retrain once per feature group with that group removed entirely. The
/// schema is refit on the train split each time, so vocabulary and
/// normalization stats never leak across variants.
pub fn feature_ablation(
    train_set: &[TrainingExample],
    eval_set: &[TrainingExample],
    groups: &[FeatureGroup],
    config: &ModelConfig,
    k: usize,
) -> Result<AblationReport> {
    let mut variants = Vec::with_capacity(groups.len() + 1);

    let run = |removed: Option<FeatureGroup>| -> Result<AblationVariant> {
        let excluded: Vec<FeatureGroup> = removed.into_iter().collect();
        let schema = fit_schema_without(train_set, k, &excluded)?;
        let (_, report) = train(train_set, eval_set, config, &schema)?;
        let last = report.history.last().expect("at least one epoch");
        Ok(AblationVariant {
            removed_group: removed.map(|g| g.label().to_string()),
            trunk_input_len: schema.trunk_input_len(),
            engagement_pr_auc: last.eval_pr_auc_engagement,
            booking_pr_auc: last.eval_pr_auc_booking,
            engagement_delta_pct: None,
            booking_delta_pct: None,
            final_train_loss: last.train_loss,
        })
    };

    variants.push(run(None)?);
    for &g in groups {
        variants.push(run(Some(g))?);
    }

    let full_eng = variants[0].engagement_pr_auc;
    let full_book = variants[0].booking_pr_auc;
    for v in &mut variants[1..] {
        v.engagement_delta_pct = match (v.engagement_pr_auc, full_eng) {
            (Some(a), Some(f)) if f > 0.0 => Some(100.0 * (a / f - 1.0)),
            _ => None,
        };
        v.booking_delta_pct = match (v.booking_pr_auc, full_book) {
            (Some(a), Some(f)) if f > 0.0 => Some(100.0 * (a / f - 1.0)),
            _ => None,
        };
    }

    Ok(AblationReport { variants })
}
