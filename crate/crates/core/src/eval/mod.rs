//! Scoring of geo-localization answers: accuracy over effective answers,
//! recall, F1, and distance-threshold accuracy via city-centre geocoding.

mod gazetteer;
mod metrics;
mod names;
mod report;
mod threshold;

use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::LatLon;
use crate::jsonl::{read_jsonl, JsonlError};

pub use gazetteer::{geocode_city, Gazetteer, GazetteerEntry};
pub use metrics::{compute_level_metrics, count_answers, f1_score, Counts, Level, LevelMetrics};
pub use names::{fold_name, normalize_place_name, NameNormalizer};
pub use report::{
    ablation_report, curve_csv, evaluate, proportion_csv, AblationRun, AblationTable, EvalReport, ProportionPoint,
    ABLATION_COLUMNS,
};
pub use threshold::{prediction_errors_km, threshold_accuracy, ThresholdAccuracy, DEFAULT_THRESHOLDS_KM};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("place not found in gazetteer: {0:?}")]
    NotFound(String),
    #[error("gazetteer: {0}")]
    Gazetteer(String),
    #[error("alias table: {0}")]
    Alias(String),
    #[error("prediction for {0:?} has no ground truth")]
    UnknownImage(String),
    #[error("more than one prediction for {0:?}")]
    DuplicatePrediction(String),
    #[error("ground truth for {0:?} has no coordinates")]
    MissingCoordinates(String),
    #[error("invalid ground truth on line {line}: {message}")]
    Truth { line: usize, message: String },
    #[error("an ablation report needs at least one run")]
    NoRuns,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Geo-tag of an evaluation image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub image_id: String,
    pub country: String,
    pub city: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lon: Option<f64>,
}

impl GroundTruth {
    pub fn position(&self) -> Option<LatLon> {
        Some(LatLon::new(self.lat?, self.lon?))
    }
}

/// Reads ground-truth JSONL, rejecting empty names, half-specified or
/// out-of-range coordinates and duplicate ids.
pub fn read_truth<R: BufRead>(reader: R) -> Result<Vec<GroundTruth>, EvalError> {
    let rows: Vec<(usize, GroundTruth)> = read_jsonl(reader).map_err(|e| match e {
        JsonlError::Json { line, source } => EvalError::Truth {
            line,
            message: source.to_string(),
        },
        JsonlError::Io(e) => EvalError::Io(e),
    })?;
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(rows.len());
    for (line, t) in rows {
        let fail = |message: String| EvalError::Truth { line, message };
        if t.country.trim().is_empty() || t.city.trim().is_empty() {
            return Err(fail("country and city must be non-empty".into()));
        }
        match (t.lat, t.lon) {
            (Some(lat), Some(lon)) if !LatLon::new(lat, lon).is_valid() => {
                return Err(fail(format!("coordinates ({lat}, {lon}) outside WGS84 range")))
            }
            (Some(_), None) | (None, Some(_)) => return Err(fail("lat and lon must be given together".into())),
            _ => {}
        }
        if !seen.insert(t.image_id.clone()) {
            return Err(fail(format!("duplicate image_id {:?}", t.image_id)));
        }
        out.push(t);
    }
    Ok(out)
}
