//! Area under the precision-recall curve.
//!
//! Step-wise (non-interpolated) integration: scores are sorted descending,
//! tied scores form one threshold group, and the area accumulates
//! `precision * delta-recall` after each group. This matches an exhaustive
//! enumeration of thresholds at unique score values.

use crate::error::{CoreError, Result};

pub fn pr_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(CoreError::ShapeMismatch(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(CoreError::EmptyInput("no scored examples".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(CoreError::InvalidConfig("scores must be finite".into()));
    }
    let positives = labels.iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == labels.len() {
        return Err(CoreError::InvalidConfig(
            "PR-AUC needs at least one positive and one negative label".into(),
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));

    let total_pos = positives as f64;
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut prev_recall = 0.0;
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        // advance through the whole tie group at this score
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            match labels[order[j]] {
                1 => tp += 1,
                _ => fp += 1,
            }
            j += 1;
        }
        let recall = tp as f64 / total_pos;
        let precision = tp as f64 / (tp + fp) as f64;
        auc += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    Ok(auc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn perfect_separation_is_one() {
        let scores = [0.9, 0.8, 0.2, 0.1];
        let labels = [1, 1, 0, 0];
        assert!((pr_auc(&scores, &labels).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn one_class_inputs_are_errors() {
        assert!(pr_auc(&[0.5, 0.3], &[1, 1]).is_err());
        assert!(pr_auc(&[0.5, 0.3], &[0, 0]).is_err());
        assert!(pr_auc(&[], &[]).is_err());
        assert!(pr_auc(&[0.5], &[1, 0]).is_err());
    }

    #[test]
    fn known_four_point_curve() {
        // descending: (1) pos, (2) neg, (3) pos, (4) neg
        // group 1: R=0.5  P=1.0   -> 0.5
        // group 2: R=0.5  P=0.5   -> 0
        // group 3: R=1.0  P=2/3   -> 0.5 * 2/3
        let scores = [0.9, 0.7, 0.5, 0.3];
        let labels = [1, 0, 1, 0];
        let expected = 0.5 + 0.5 * (2.0 / 3.0);
        assert!((pr_auc(&scores, &labels).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn ties_are_grouped() {
        // all scores equal: single group with precision = prevalence
        let scores = [0.5, 0.5, 0.5, 0.5];
        let labels = [1, 0, 0, 0];
        assert!((pr_auc(&scores, &labels).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn random_scores_approach_prevalence() {
        let mut r = crate::rng::root(17);
        let n = 10_000;
        let prevalence = 0.15;
        let labels: Vec<u8> = (0..n).map(|_| (r.gen::<f64>() < prevalence) as u8).collect();
        let scores: Vec<f64> = (0..n).map(|_| r.gen::<f64>()).collect();
        let auc = pr_auc(&scores, &labels).unwrap();
        let actual_prev = labels.iter().map(|&y| y as f64).sum::<f64>() / n as f64;
        assert!(
            (auc - actual_prev).abs() < 0.02,
            "auc {auc} vs prevalence {actual_prev}"
        );
    }

    #[test]
    fn invariant_under_monotone_transform() {
        let mut r = crate::rng::root(3);
        let scores: Vec<f64> = (0..500).map(|_| r.gen::<f64>()).collect();
        let labels: Vec<u8> = (0..500).map(|_| (r.gen::<f64>() < 0.2) as u8).collect();
        let base = pr_auc(&scores, &labels).unwrap();
        let squashed: Vec<f64> = scores.iter().map(|&s| (5.0 * s).tanh()).collect();
        let shifted: Vec<f64> = scores.iter().map(|&s| 3.0 * s + 11.0).collect();
        assert!((pr_auc(&squashed, &labels).unwrap() - base).abs() < 1e-12);
        assert!((pr_auc(&shifted, &labels).unwrap() - base).abs() < 1e-12);
    }
}
