//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each export takes and returns JSON strings. The `*_json` functions hold
//! the logic and are plain Rust so they can be tested natively.

use geocurate_core::eval::f1_score;
use geocurate_core::geo::sampler::sample_polyline;
use geocurate_core::geo::{select_views, LatLon, Polyline};
use geocurate_core::locatability::{
    locatability_score, minmax_normalize, reduce_to_weights, threshold_zero, SegmentationProfile, SimilarityMatrix,
};
use geocurate_core::prediction::parse_prediction;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn parse<T: serde::de::DeserializeOwned>(what: &str, text: &str) -> Result<T, String> {
    serde_json::from_str(text).map_err(|e| format!("{what}: {e}"))
}

/// `points` is `[[lat, lon], ...]`. Returns one object per sample with its
/// position, arc offset, headings and the two chosen views.
pub fn sample_road_json(points: &str, interval_m: f64, seed: u64) -> Result<String, String> {
    let pts: Vec<[f64; 2]> = parse("points", points)?;
    if !(interval_m.is_finite() && interval_m > 0.0) {
        return Err(format!("interval must be positive, got {interval_m}"));
    }
    let vertices: Vec<LatLon> = pts.iter().map(|p| LatLon::new(p[0], p[1])).collect();
    if let Some(bad) = vertices.iter().find(|v| !v.is_valid()) {
        return Err(format!("invalid coordinate {}, {}", bad.lat, bad.lon));
    }
    let road = Polyline {
        id: "road".into(),
        vertices,
        city: None,
        country: None,
    };
    let length_m = road.length_m();
    let samples: Vec<Value> = sample_polyline(&road, interval_m)
        .into_iter()
        .map(|s| select_views(s, seed))
        .map(|s| {
            let views = s.selected_views.expect("views selected");
            json!({
                "lat": s.position.lat,
                "lon": s.position.lon,
                "offset_m": s.arc_offset_m,
                "headings": s.headings,
                "lateral": views.x.to_string(),
                "axial": views.y.to_string(),
                "lateral_heading": s.headings.lateral(views.x),
                "axial_heading": s.headings.axial(views.y),
            })
        })
        .collect();
    Ok(json!({ "length_m": length_m, "samples": samples }).to_string())
}

/// Builds weights from a raw clue-by-label similarity matrix (`[[..], ..]`)
/// at threshold `tau`, then scores the label-ratio profile with them.
pub fn explore_locatability_json(similarity: &str, tau: f64, ratios: &str) -> Result<String, String> {
    let rows: Vec<Vec<f64>> = parse("similarity", similarity)?;
    let ratios: Vec<f64> = parse("ratios", ratios)?;
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err("similarity rows differ in length".into());
    }
    let fail = |e: geocurate_core::locatability::LocatabilityError| e.to_string();
    let raw = SimilarityMatrix::from_raw(rows.len(), cols, rows.concat()).map_err(fail)?;
    let normalized = minmax_normalize(&raw).map_err(fail)?;
    let weights = reduce_to_weights(&threshold_zero(&normalized, tau).map_err(fail)?, "demo", "demo").map_err(fail)?;
    let profile = SegmentationProfile {
        image_id: "demo".into(),
        label_schema_id: "demo".into(),
        ratios,
    };
    profile.validate().map_err(fail)?;
    let score = locatability_score(&profile, &weights).map_err(fail)?.score;
    Ok(json!({
        "normalized": normalized.values().chunks(cols.max(1)).collect::<Vec<_>>(),
        "weights": weights.weights,
        "score": score,
    })
    .to_string())
}

/// Parses a model reply and returns the parsed fields.
pub fn parse_answer_json(text: &str) -> String {
    serde_json::to_string(&parse_prediction(text)).expect("answer serialises")
}

#[wasm_bindgen]
pub fn sample_road(points: &str, interval_m: f64, seed: u64) -> Result<String, JsValue> {
    sample_road_json(points, interval_m, seed).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn explore_locatability(similarity: &str, tau: f64, ratios: &str) -> Result<String, JsValue> {
    explore_locatability_json(similarity, tau, ratios).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn parse_answer(text: &str) -> String {
    parse_answer_json(text)
}

#[wasm_bindgen]
pub fn f1(accuracy: f64, recall: f64) -> f64 {
    f1_score(accuracy, recall)
}
