use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::names::NameNormalizer;
use super::{EvalError, GroundTruth};
use crate::prediction::{FailureCause, PredictionRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Country,
    City,
}

/// Accuracy over effective answers, recall of effective answers, and their F1.
/// `accuracy` is `None` when there were no effective answers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelMetrics {
    pub accuracy: Option<f64>,
    pub recall: f64,
    pub f1: f64,
}

/// Harmonic mean of accuracy and recall, 0 when both are 0.
pub fn f1_score(accuracy: f64, recall: f64) -> f64 {
    if accuracy + recall > 0.0 {
        2.0 * accuracy * recall / (accuracy + recall)
    } else {
        0.0
    }
}

impl LevelMetrics {
    pub fn from_rates(accuracy: f64, recall: f64) -> Self {
        Self {
            accuracy: Some(accuracy),
            recall,
            f1: f1_score(accuracy, recall),
        }
    }
}

/// Answer counts, with every ineffective answer attributed to one cause.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub total: usize,
    pub effective: usize,
    pub failures: BTreeMap<FailureCause, usize>,
}

impl Counts {
    pub fn failure_total(&self) -> usize {
        self.failures.values().sum()
    }

    /// `total == effective + sum(failures)`
    pub fn is_conserved(&self) -> bool {
        self.total == self.effective + self.failure_total()
    }
}

/// Pairs each ground-truth item with its prediction, if any.
///
/// Predictions for ids absent from the ground truth are an error. Ground
/// truth without a prediction is paired with `None`.
pub(crate) fn align<'a>(
    preds: &'a [PredictionRecord],
    truth: &'a [GroundTruth],
) -> Result<Vec<(&'a GroundTruth, Option<&'a PredictionRecord>)>, EvalError> {
    let mut by_id: HashMap<&str, &PredictionRecord> = HashMap::with_capacity(preds.len());
    for p in preds {
        if by_id.insert(p.image_id.as_str(), p).is_some() {
            return Err(EvalError::DuplicatePrediction(p.image_id.clone()));
        }
    }
    let truth_ids: std::collections::HashSet<&str> = truth.iter().map(|t| t.image_id.as_str()).collect();
    if let Some(orphan) = preds.iter().find(|p| !truth_ids.contains(p.image_id.as_str())) {
        return Err(EvalError::UnknownImage(orphan.image_id.clone()));
    }
    Ok(truth
        .iter()
        .map(|t| (t, by_id.get(t.image_id.as_str()).copied()))
        .collect())
}

pub fn count_answers(preds: &[PredictionRecord], truth: &[GroundTruth]) -> Result<Counts, EvalError> {
    let mut counts = Counts::default();
    for (_, pred) in align(preds, truth)? {
        counts.total += 1;
        match pred {
            Some(p) if p.effective => counts.effective += 1,
            Some(p) => {
                *counts
                    .failures
                    .entry(p.failure_cause.unwrap_or(FailureCause::Empty))
                    .or_default() += 1
            }
            None => *counts.failures.entry(FailureCause::Empty).or_default() += 1,
        }
    }
    Ok(counts)
}

/// Country- or city-level accuracy/recall/F1. Names are compared after
/// normalisation with `normalizer`.
pub fn compute_level_metrics(
    preds: &[PredictionRecord],
    truth: &[GroundTruth],
    level: Level,
    normalizer: &NameNormalizer,
) -> Result<LevelMetrics, EvalError> {
    let pairs = align(preds, truth)?;
    let total = pairs.len();
    let mut effective = 0usize;
    let mut correct = 0usize;
    for (t, p) in pairs {
        let Some(p) = p.filter(|p| p.effective) else {
            continue;
        };
        effective += 1;
        let (predicted, expected) = match level {
            Level::Country => (p.country.as_deref(), &t.country),
            Level::City => (p.city.as_deref(), &t.city),
        };
        if predicted.is_some_and(|v| normalizer.normalize(v) == normalizer.normalize(expected)) {
            correct += 1;
        }
    }
    if effective == 0 {
        return Ok(LevelMetrics {
            accuracy: None,
            recall: 0.0,
            f1: 0.0,
        });
    }
    let accuracy = correct as f64 / effective as f64;
    let recall = effective as f64 / total as f64;
    Ok(LevelMetrics {
        accuracy: Some(accuracy),
        recall,
        f1: f1_score(accuracy, recall),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prediction::{PredictionRecord, RefusalDetector};

    fn truth(id: &str, country: &str, city: &str) -> GroundTruth {
        GroundTruth {
            image_id: id.into(),
            country: country.into(),
            city: city.into(),
            lat: None,
            lon: None,
        }
    }

    fn pred(id: &str, raw: &str) -> PredictionRecord {
        PredictionRecord::from_response(id, raw, None, &RefusalDetector::default())
    }

    #[test]
    fn reference_f1_rows() {
        assert!((f1_score(0.7943, 1.00) - 0.8854).abs() <= 1e-4);
        assert!((f1_score(0.8917, 0.34) - 0.4923).abs() <= 1e-4);
        assert_eq!(f1_score(0.0, 0.0), 0.0);
    }

    #[test]
    fn all_correct() {
        let t = vec![truth("a", "France", "Paris"), truth("b", "Japan", "Tokyo")];
        let p = vec![
            pred("a", "{'country':'France','city':'Paris'}"),
            pred("b", "{'country':'japan','city':' Tokyo '}"),
        ];
        let n = NameNormalizer::builtin();
        for level in [Level::Country, Level::City] {
            let m = compute_level_metrics(&p, &t, level, n).unwrap();
            assert_eq!((m.accuracy, m.recall, m.f1), (Some(1.0), 1.0, 1.0));
        }
    }

    #[test]
    fn refusals_reduce_recall_not_accuracy() {
        let t = vec![
            truth("a", "United States", "New York City"),
            truth("b", "Japan", "Tokyo"),
        ];
        let p = vec![
            pred("a", "{'country':'USA','city':'NYC'}"),
            pred("b", "I'm sorry, I can't provide assistance with that request."),
        ];
        let m = compute_level_metrics(&p, &t, Level::City, NameNormalizer::builtin()).unwrap();
        assert_eq!(m.accuracy, Some(1.0));
        assert_eq!(m.recall, 0.5);
        let c = count_answers(&p, &t).unwrap();
        assert_eq!(c.failures.get(&FailureCause::Refusal), Some(&1));
        assert!(c.is_conserved());
    }

    #[test]
    fn no_effective_answers() {
        let t = vec![truth("a", "France", "Paris")];
        let p = vec![pred("a", "")];
        let m = compute_level_metrics(&p, &t, Level::Country, NameNormalizer::builtin()).unwrap();
        assert_eq!((m.accuracy, m.recall, m.f1), (None, 0.0, 0.0));
    }

    #[test]
    fn missing_prediction_counts_as_empty() {
        let t = vec![truth("a", "France", "Paris"), truth("b", "Japan", "Tokyo")];
        let p = vec![pred("a", "{'country':'France','city':'Paris'}")];
        let c = count_answers(&p, &t).unwrap();
        assert_eq!((c.total, c.effective), (2, 1));
        assert_eq!(c.failures.get(&FailureCause::Empty), Some(&1));
    }

    #[test]
    fn orphan_prediction_rejected() {
        let t = vec![truth("a", "France", "Paris")];
        let p = vec![pred("zzz", "{}")];
        assert!(matches!(
            compute_level_metrics(&p, &t, Level::City, NameNormalizer::builtin()),
            Err(EvalError::UnknownImage(_))
        ));
    }
}
