//! Road-network ingestion from GeoJSON feature collections.

use serde_json::Value;
use thiserror::Error;

use super::geodesy::{geodesic_distance_m, LatLon};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("malformed road network document at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid road network: {0}")]
    Invalid(String),
    #[error("road network contains no line geometries ({skipped} features skipped)")]
    Empty { skipped: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub id: String,
    pub vertices: Vec<LatLon>,
    pub city: Option<String>,
    pub country: Option<String>,
}

impl Polyline {
    /// Geodesic length in metres.
    pub fn length_m(&self) -> f64 {
        self.vertices.windows(2).map(|w| geodesic_distance_m(w[0], w[1])).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadNetwork {
    pub source: String,
    pub polylines: Vec<Polyline>,
    /// Features that were not line geometries (or collapsed to fewer than two vertices).
    pub skipped: usize,
}

impl RoadNetwork {
    pub fn new(source: impl Into<String>, polylines: Vec<Polyline>) -> Self {
        Self {
            source: source.into(),
            polylines,
            skipped: 0,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.polylines.iter().map(|p| p.vertices.len()).sum()
    }
}

/// Parses a GeoJSON `FeatureCollection`, flattening `LineString` and
/// `MultiLineString` geometries into polylines.
pub fn parse_road_network(text: &str, source: &str) -> Result<RoadNetwork, NetworkError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| NetworkError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;

    let features = match doc.get("type").and_then(Value::as_str) {
        Some("FeatureCollection") => doc
            .get("features")
            .and_then(Value::as_array)
            .ok_or_else(|| NetworkError::Invalid("FeatureCollection without a features array".into()))?,
        other => {
            return Err(NetworkError::Invalid(format!(
                "expected a FeatureCollection, found type {other:?}"
            )))
        }
    };

    let mut polylines = Vec::new();
    let mut skipped = 0;
    for (index, feature) in features.iter().enumerate() {
        let base_id = feature_id(feature, index);
        let props = feature.get("properties");
        let tag = |key: &str| {
            props
                .and_then(|p| p.get(key))
                .and_then(Value::as_str)
                .map(str::to_owned)
        };
        let (city, country) = (tag("city"), tag("country"));

        let Some(geometry) = feature.get("geometry").filter(|g| !g.is_null()) else {
            skipped += 1;
            continue;
        };
        let coords = geometry.get("coordinates");
        let parts: Vec<&Value> = match geometry.get("type").and_then(Value::as_str) {
            Some("LineString") => coords.into_iter().collect(),
            Some("MultiLineString") => coords
                .and_then(Value::as_array)
                .map(|a| a.iter().collect())
                .unwrap_or_default(),
            _ => {
                skipped += 1;
                continue;
            }
        };
        let multi = parts.len() > 1;
        for (part_index, part) in parts.into_iter().enumerate() {
            let vertices = parse_line(part, &base_id)?;
            if vertices.len() < 2 {
                skipped += 1;
                continue;
            }
            let id = if multi {
                format!("{base_id}#{part_index}")
            } else {
                base_id.clone()
            };
            polylines.push(Polyline {
                id,
                vertices,
                city: city.clone(),
                country: country.clone(),
            });
        }
    }

    if polylines.is_empty() {
        return Err(NetworkError::Empty { skipped });
    }
    Ok(RoadNetwork {
        source: source.to_owned(),
        polylines,
        skipped,
    })
}

pub fn read_road_network(path: &std::path::Path) -> Result<RoadNetwork, NetworkError> {
    let text = std::fs::read_to_string(path)?;
    parse_road_network(&text, &path.display().to_string())
}

fn feature_id(feature: &Value, index: usize) -> String {
    let id = feature
        .get("id")
        .or_else(|| feature.get("properties").and_then(|p| p.get("id")));
    match id {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => format!("f{index}"),
    }
}

/// Reads a GeoJSON position array (`[lon, lat, ...]`), dropping repeated vertices.
fn parse_line(value: &Value, id: &str) -> Result<Vec<LatLon>, NetworkError> {
    let positions = value
        .as_array()
        .ok_or_else(|| NetworkError::Invalid(format!("feature {id}: coordinates are not an array")))?;
    let mut out: Vec<LatLon> = Vec::with_capacity(positions.len());
    for pos in positions {
        let pair = pos
            .as_array()
            .filter(|p| p.len() >= 2)
            .ok_or_else(|| NetworkError::Invalid(format!("feature {id}: position is not a [lon, lat] pair")))?;
        let (Some(lon), Some(lat)) = (pair[0].as_f64(), pair[1].as_f64()) else {
            return Err(NetworkError::Invalid(format!("feature {id}: non-numeric coordinate")));
        };
        let p = LatLon::new(lat, lon);
        if !p.is_valid() {
            return Err(NetworkError::Invalid(format!(
                "feature {id}: coordinate ({lat}, {lon}) outside WGS84 range"
            )));
        }
        if out.last() != Some(&p) {
            out.push(p);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_line_feature() {
        let doc = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{},"geometry":{"type":"LineString","coordinates":[[2.0,48.0],[2.1,48.0]]}}
        ]}"#;
        let net = parse_road_network(doc, "t").unwrap();
        assert_eq!(net.polylines.len(), 1);
        assert_eq!(net.vertex_count(), 2);
        assert_eq!(net.polylines[0].vertices[0], LatLon::new(48.0, 2.0));
    }

    #[test]
    fn multiline_flattens_into_parts() {
        let doc = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","id":"m","properties":{"city":"Paris"},"geometry":{"type":"MultiLineString","coordinates":[
                [[0,0],[0,1]], [[1,0],[1,1]], [[2,0],[2,1],[2,2]]
            ]}}
        ]}"#;
        let net = parse_road_network(doc, "t").unwrap();
        assert_eq!(net.polylines.len(), 3);
        assert_eq!(net.polylines[2].id, "m#2");
        assert_eq!(net.polylines[1].city.as_deref(), Some("Paris"));
    }

    #[test]
    fn consecutive_duplicates_are_dropped() {
        let doc = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","geometry":{"type":"LineString","coordinates":[[0,0],[0,0],[0,1],[0,1]]}},
            {"type":"Feature","geometry":{"type":"LineString","coordinates":[[5,5],[5,5]]}}
        ]}"#;
        let net = parse_road_network(doc, "t").unwrap();
        assert_eq!(net.polylines.len(), 1);
        assert_eq!(net.polylines[0].vertices.len(), 2);
        assert_eq!(net.skipped, 1);
    }

    #[test]
    fn malformed_reports_position() {
        let err = parse_road_network(
            "{\n  \"type\": \"FeatureCollection\",\n  \"features\": [ oops ]\n}",
            "t",
        )
        .unwrap_err();
        match err {
            NetworkError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn points_only_is_empty_error() {
        let doc = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","geometry":{"type":"Point","coordinates":[0,0]}}
        ]}"#;
        assert!(matches!(
            parse_road_network(doc, "t"),
            Err(NetworkError::Empty { skipped: 1 })
        ));
    }

    #[test]
    fn out_of_range_coordinate_rejected() {
        let doc = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","geometry":{"type":"LineString","coordinates":[[0,95],[0,1]]}}
        ]}"#;
        assert!(matches!(parse_road_network(doc, "t"), Err(NetworkError::Invalid(_))));
    }
}
