use serde::{Deserialize, Serialize};

use super::{LocatabilityError, SegmentationProfile};

/// Per-label importance vector, summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocatabilityWeights {
    pub weights: Vec<f64>,
    pub label_schema_id: String,
    /// Similarity threshold the weights were built with.
    pub tau: f64,
    pub corpus_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocatabilityScore {
    pub image_id: String,
    pub score: f64,
}

/// Weighted sum of the profile's area ratios.
pub fn locatability_score(
    profile: &SegmentationProfile,
    w: &LocatabilityWeights,
) -> Result<LocatabilityScore, LocatabilityError> {
    if profile.label_schema_id != w.label_schema_id {
        return Err(LocatabilityError::SchemaMismatch {
            profile: profile.label_schema_id.clone(),
            weights: w.label_schema_id.clone(),
        });
    }
    if profile.ratios.len() != w.weights.len() {
        return Err(LocatabilityError::LengthMismatch {
            image_id: profile.image_id.clone(),
            expected: w.weights.len(),
            found: profile.ratios.len(),
        });
    }
    let score = profile.ratios.iter().zip(&w.weights).map(|(r, w)| r * w).sum();
    Ok(LocatabilityScore {
        image_id: profile.image_id.clone(),
        score,
    })
}

/// Images split at a locatability threshold; each side is sorted by
/// descending score, ties broken by image id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub threshold: f64,
    pub high: Vec<LocatabilityScore>,
    pub low: Vec<LocatabilityScore>,
}

impl Partition {
    pub fn high_ids(&self) -> Vec<&str> {
        self.high.iter().map(|s| s.image_id.as_str()).collect()
    }

    pub fn low_ids(&self) -> Vec<&str> {
        self.low.iter().map(|s| s.image_id.as_str()).collect()
    }
}

/// Splits precomputed scores: `high` holds every score `>= threshold`.
pub fn partition_scores(scores: Vec<LocatabilityScore>, threshold: f64) -> Result<Partition, LocatabilityError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(LocatabilityError::BadThreshold(threshold));
    }
    let (mut high, mut low): (Vec<_>, Vec<_>) = scores.into_iter().partition(|s| s.score >= threshold);
    let order = |a: &LocatabilityScore, b: &LocatabilityScore| {
        b.score.total_cmp(&a.score).then_with(|| a.image_id.cmp(&b.image_id))
    };
    high.sort_by(order);
    low.sort_by(order);
    Ok(Partition { threshold, high, low })
}

pub fn filter_by_locatability(
    profiles: &[SegmentationProfile],
    w: &LocatabilityWeights,
    threshold: f64,
) -> Result<Partition, LocatabilityError> {
    let scores = profiles
        .iter()
        .map(|p| locatability_score(p, w))
        .collect::<Result<Vec<_>, _>>()?;
    partition_scores(scores, threshold)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weights(w: &[f64]) -> LocatabilityWeights {
        LocatabilityWeights {
            weights: w.to_vec(),
            label_schema_id: "s".into(),
            tau: 0.5,
            corpus_id: "c".into(),
        }
    }

    fn profile(id: &str, r: &[f64]) -> SegmentationProfile {
        SegmentationProfile {
            image_id: id.into(),
            label_schema_id: "s".into(),
            ratios: r.to_vec(),
        }
    }

    #[test]
    fn one_hot_picks_weight() {
        let w = weights(&[0.2, 0.5, 0.3]);
        let s = locatability_score(&profile("a", &[0.0, 1.0, 0.0]), &w).unwrap();
        assert_eq!(s.score, 0.5);
    }

    #[test]
    fn uniform_profile_scores_one_over_n() {
        let w = weights(&[0.1, 0.2, 0.3, 0.4]);
        let s = locatability_score(&profile("a", &[0.25; 4]), &w).unwrap();
        assert!((s.score - 0.25).abs() < 1e-15);
    }

    #[test]
    fn worked_example() {
        let w = weights(&[0.6, 0.1, 0.3]);
        let s = locatability_score(&profile("a", &[0.3, 0.5, 0.2]), &w).unwrap();
        assert!((s.score - 0.29).abs() < 1e-12);
    }

    #[test]
    fn schema_mismatch() {
        let w = weights(&[1.0]);
        let mut p = profile("a", &[1.0]);
        p.label_schema_id = "other".into();
        assert!(matches!(
            locatability_score(&p, &w),
            Err(LocatabilityError::SchemaMismatch { .. })
        ));
    }

    #[test]
    fn boundary_partition() {
        let scores = [("a", 0.39), ("b", 0.40), ("c", 0.41)]
            .iter()
            .map(|(id, s)| LocatabilityScore {
                image_id: id.to_string(),
                score: *s,
            })
            .collect();
        let p = partition_scores(scores, 0.40).unwrap();
        assert_eq!(p.high_ids(), vec!["c", "b"]);
        assert_eq!(p.low_ids(), vec!["a"]);
    }

    #[test]
    fn all_zero_scores_are_low() {
        let w = weights(&[0.5, 0.5]);
        let profiles = vec![profile("a", &[0.0, 0.0]), profile("b", &[0.0, 0.0])];
        let p = filter_by_locatability(&profiles, &w, 0.4).unwrap();
        assert!(p.high.is_empty());
        assert_eq!(p.low.len(), 2);
    }
}
