//! Offline evaluation: PR-AUC, predictor comparison, feature ablation and
//! simulated A/B tests against the synthetic ground truth.

mod ab;
mod ablation;
mod compare;
mod prauc;

pub use ab::{simulated_ab, AbConfig, AbReport, ArmStats, Policy};
pub use ablation::{feature_ablation, AblationReport, AblationVariant};
pub use compare::{
    compare_predictors, conversion_rows, ml_scores, CompareReport, ConversionRow, PredictorResult,
};
pub use prauc::pr_auc;

use serde::{Deserialize, Serialize};

use crate::events::TrainingExample;
use crate::synth::MarketplaceWorld;

/// Empirical per-filter conversion rates within one segment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentFcr {
    pub segment: String,
    /// Conversion rate per filter; absent where the filter was never applied.
    pub fcr: Vec<Option<f64>>,
    pub searches: u64,
}

/// Per-segment filter conversion rates, classifying searches by the world's
/// segment rules. Exact on crisp-band worlds.
pub fn per_segment_fcr(world: &MarketplaceWorld, examples: &[TrainingExample]) -> Vec<SegmentFcr> {
    let k = world.k();
    let s = world.num_segments();
    let mut applied = vec![vec![0u64; k]; s];
    let mut converted = vec![vec![0u64; k]; s];
    let mut searches = vec![0u64; s];
    for ex in examples {
        let seg = world.segment_of_query(&ex.query);
        searches[seg] += 1;
        for f in ex.filters.applied_ids() {
            applied[seg][f] += 1;
            converted[seg][f] += ex.booking_label as u64;
        }
    }
    (0..s)
        .map(|seg| SegmentFcr {
            segment: world.segments[seg].name.clone(),
            fcr: (0..k)
                .map(|f| {
                    (applied[seg][f] > 0)
                        .then(|| converted[seg][f] as f64 / applied[seg][f] as f64)
                })
                .collect(),
            searches: searches[seg],
        })
        .collect()
}

/// Umbrella report emitted by the evaluation stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_segment_fcr: Option<Vec<SegmentFcr>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ablation: Option<AblationReport>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub ab_tests: Vec<AbReport>,
}
