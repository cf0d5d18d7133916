use serde::{Deserialize, Serialize};

use super::gazetteer::{geocode_city, Gazetteer};
use super::metrics::align;
use super::{EvalError, GroundTruth};
use crate::geo::geodesic_distance;
use crate::prediction::PredictionRecord;

/// Street, city and country radii, kilometres.
pub const DEFAULT_THRESHOLDS_KM: [f64; 3] = [1.0, 25.0, 750.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdAccuracy {
    pub threshold_km: f64,
    pub fraction: f64,
}

/// Distance from the geocoded predicted city to the true location; `None`
/// for ineffective answers and names the gazetteer does not know.
pub fn prediction_errors_km(
    preds: &[PredictionRecord],
    truth: &[GroundTruth],
    g: &Gazetteer,
) -> Result<Vec<(String, Option<f64>)>, EvalError> {
    let pairs = align(preds, truth)?;
    let mut out = Vec::with_capacity(pairs.len());
    for (t, p) in pairs {
        let position = t
            .position()
            .ok_or_else(|| EvalError::MissingCoordinates(t.image_id.clone()))?;
        let distance = p
            .filter(|p| p.effective)
            .and_then(|p| geocode_city(p.city.as_deref()?, p.country.as_deref(), g).ok())
            .map(|predicted| geodesic_distance(predicted, position));
        out.push((t.image_id.clone(), distance));
    }
    Ok(out)
}

/// Fraction of all ground-truth items whose predicted city centre lies
/// within each threshold. Misses of any kind count against every threshold.
pub fn threshold_accuracy(
    preds: &[PredictionRecord],
    truth: &[GroundTruth],
    g: &Gazetteer,
    thresholds_km: &[f64],
) -> Result<Vec<ThresholdAccuracy>, EvalError> {
    let errors = prediction_errors_km(preds, truth, g)?;
    let total = errors.len();
    Ok(thresholds_km
        .iter()
        .map(|&t| {
            let hits = errors.iter().filter(|(_, d)| d.is_some_and(|d| d <= t)).count();
            ThresholdAccuracy {
                threshold_km: t,
                fraction: if total == 0 { 0.0 } else { hits as f64 / total as f64 },
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::names::NameNormalizer;
    use crate::prediction::{RefusalDetector, DEFAULT_REFUSALS};

    fn gazetteer() -> Gazetteer {
        let csv = "city,country,lat,lon,population,aliases\nParis,France,48.85341,2.34880,2138551,\n";
        Gazetteer::from_csv(csv.as_bytes(), NameNormalizer::plain()).unwrap()
    }

    #[test]
    fn exact_hit_counts_everywhere() {
        let t = vec![GroundTruth {
            image_id: "a".into(),
            country: "France".into(),
            city: "Paris".into(),
            lat: Some(48.85341),
            lon: Some(2.34880),
        }];
        let p = vec![PredictionRecord::from_response(
            "a",
            "{'country':'France','city':'Paris'}",
            None,
            &RefusalDetector::default(),
        )];
        let acc = threshold_accuracy(&p, &t, &gazetteer(), &DEFAULT_THRESHOLDS_KM).unwrap();
        assert!(acc.iter().all(|a| a.fraction == 1.0));
    }

    #[test]
    fn refusals_miss_everywhere() {
        let t = vec![GroundTruth {
            image_id: "a".into(),
            country: "France".into(),
            city: "Paris".into(),
            lat: Some(48.85341),
            lon: Some(2.34880),
        }];
        let p = vec![PredictionRecord::from_response(
            "a",
            DEFAULT_REFUSALS[1],
            None,
            &RefusalDetector::default(),
        )];
        let acc = threshold_accuracy(&p, &t, &gazetteer(), &DEFAULT_THRESHOLDS_KM).unwrap();
        assert!(acc.iter().all(|a| a.fraction == 0.0));
    }

    #[test]
    fn requires_coordinates() {
        let t = vec![GroundTruth {
            image_id: "a".into(),
            country: "France".into(),
            city: "Paris".into(),
            lat: None,
            lon: None,
        }];
        assert!(matches!(
            threshold_accuracy(&[], &t, &gazetteer(), &[1.0]),
            Err(EvalError::MissingCoordinates(_))
        ));
    }
}
