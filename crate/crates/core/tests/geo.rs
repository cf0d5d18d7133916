use std::f64::consts::PI;
use std::path::PathBuf;

use geocurate_core::geo::geodesy::{destination, geodesic_distance, geodesic_distance_m, LatLon, EARTH_RADIUS_KM};
use geocurate_core::geo::{
    export_samples_csv, parse_road_network, read_samples_csv, sample_points, select_views, AxialView, LateralView,
    Polyline, RoadNetwork,
};
use proptest::prelude::*;
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

/// Textbook haversine, written out independently of the library.
fn oracle_haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let r = 6371.0088_f64;
    let (lat1, lon1) = (a.0 * PI / 180.0, a.1 * PI / 180.0);
    let (lat2, lon2) = (b.0 * PI / 180.0, b.1 * PI / 180.0);
    let s1 = ((lat2 - lat1) / 2.0).sin();
    let s2 = ((lon2 - lon1) / 2.0).sin();
    let h = s1 * s1 + lat1.cos() * lat2.cos() * s2 * s2;
    2.0 * r * h.sqrt().min(1.0).asin()
}

/// Great-circle interpolation via rotation of the start vector towards the
/// end vector in their common plane.
fn oracle_interpolate(a: (f64, f64), b: (f64, f64), dist_m: f64) -> (f64, f64) {
    let v = |p: (f64, f64)| {
        let (la, lo) = (p.0.to_radians(), p.1.to_radians());
        [la.cos() * lo.cos(), la.cos() * lo.sin(), la.sin()]
    };
    let (va, vb) = (v(a), v(b));
    let dot: f64 = va.iter().zip(&vb).map(|(x, y)| x * y).sum();
    // component of vb orthogonal to va, normalised
    let mut u = [vb[0] - dot * va[0], vb[1] - dot * va[1], vb[2] - dot * va[2]];
    let n = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
    u.iter_mut().for_each(|c| *c /= n);
    let theta = dist_m / (6371.0088e3);
    let p = [
        theta.cos() * va[0] + theta.sin() * u[0],
        theta.cos() * va[1] + theta.sin() * u[1],
        theta.cos() * va[2] + theta.sin() * u[2],
    ];
    (p[2].asin().to_degrees(), p[1].atan2(p[0]).to_degrees())
}

#[test]
fn mixed_fixture_counts_match_independent_count() {
    let text = std::fs::read_to_string(fixture("roads_mixed.geojson")).unwrap();
    let doc: Value = serde_json::from_str(&text).unwrap();
    let features = doc["features"].as_array().unwrap();
    let lines = features
        .iter()
        .filter(|f| f["geometry"]["type"] == "LineString")
        .count();
    let other = features.len() - lines;
    assert_eq!((features.len(), lines, other), (12, 9, 3));

    let network = parse_road_network(&text, "roads_mixed").unwrap();
    assert_eq!(network.polylines.len(), lines);
    assert_eq!(network.skipped, other);
    assert!(network.polylines.iter().any(|p| p.id == "way/1000"));
    assert!(network.polylines.iter().any(|p| p.id == "way/1001"));
}

#[test]
fn multi_line_string_flattens() {
    let text = r#"{"type":"FeatureCollection","features":[{"type":"Feature","id":"m","properties":{},
        "geometry":{"type":"MultiLineString","coordinates":[[[0,0],[0,1]],[[1,0],[1,1]],[[2,0],[2,1],[2,2]]]}}]}"#;
    let network = parse_road_network(text, "t").unwrap();
    assert_eq!(network.polylines.len(), 3);
    assert_eq!(network.vertex_count(), 7);
}

#[test]
fn malformed_document_reports_position() {
    let err = parse_road_network("{\n  \"type\": \"FeatureCollection\",\n  \"features\": [,]\n}", "t").unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("line 3"), "{msg}");
}

#[test]
fn paris_london_matches_oracle() {
    let (a, b) = ((48.8566, 2.3522), (51.5074, -0.1278));
    let ours = geodesic_distance(LatLon::new(a.0, a.1), LatLon::new(b.0, b.1));
    let oracle = oracle_haversine_km(a, b);
    assert!(((ours - oracle) / oracle).abs() < 1e-9, "{ours} vs {oracle}");
    assert!((ours - 343.5).abs() < 1.0);
}

#[test]
fn antipodes() {
    let d = geodesic_distance(LatLon::new(0.0, 0.0), LatLon::new(0.0, 180.0));
    assert!((d - PI * EARTH_RADIUS_KM).abs() < 1e-9);
}

fn straight_polyline(id: &str, start: LatLon, bearing: f64, length_m: f64) -> Polyline {
    Polyline {
        id: id.into(),
        vertices: vec![start, destination(start, bearing, length_m)],
        city: None,
        country: None,
    }
}

#[test]
fn twelve_km_polyline_against_interpolation_oracle() {
    let start = LatLon::new(-33.45, -70.66);
    let line = straight_polyline("p", start, 63.0, 12_000.0);
    let end = line.vertices[1];
    let network = RoadNetwork::new("t", vec![line]);
    let samples = sample_points(&network, 4000.0).unwrap();
    assert_eq!(samples.len(), 4);
    for (k, s) in samples.iter().enumerate() {
        let offset = 4000.0 * k as f64;
        assert!((s.arc_offset_m - offset).abs() < 1e-6);
        let (lat, lon) = oracle_interpolate((start.lat, start.lon), (end.lat, end.lon), offset);
        let err = geodesic_distance_m(s.position, LatLon::new(lat, lon));
        assert!(err < 1.0, "sample {k} off by {err} m");
    }
}

#[test]
fn two_polylines_four_and_nine_km() {
    let network = RoadNetwork::new(
        "t",
        vec![
            straight_polyline("a", LatLon::new(10.0, 10.0), 0.0, 4000.0),
            straight_polyline("b", LatLon::new(20.0, 20.0), 90.0, 9000.0),
        ],
    );
    let samples = sample_points(&network, 4000.0).unwrap();
    let count = |id: &str| samples.iter().filter(|s| s.source_polyline == id).count();
    // a: offsets 0, 4000; b: 0, 4000, 8000 with 1000 m left (< 2000)
    assert_eq!((count("a"), count("b")), (2, 3));
}

#[test]
fn short_polyline_yields_start_only() {
    let network = RoadNetwork::new("t", vec![straight_polyline("s", LatLon::new(1.0, 1.0), 45.0, 1500.0)]);
    let samples = sample_points(&network, 4000.0).unwrap();
    assert_eq!(samples.len(), 1);
    assert_eq!(samples[0].arc_offset_m, 0.0);
    assert_eq!(samples[0].position, LatLon::new(1.0, 1.0));
}

#[test]
fn view_selection_is_uniform() {
    let line = straight_polyline("u", LatLon::new(0.0, 0.0), 90.0, 100.0);
    let base = sample_points(&RoadNetwork::new("t", vec![line]), 4000.0)
        .unwrap()
        .remove(0);
    let mut counts = [[0usize; 2]; 2];
    for seed in 0..10_000u64 {
        let v = select_views(base.clone(), seed).selected_views.unwrap();
        let x = usize::from(v.x == LateralView::Right);
        let y = usize::from(v.y == AxialView::Back);
        counts[x][y] += 1;
    }
    for row in counts {
        for c in row {
            let freq = c as f64 / 10_000.0;
            assert!((freq - 0.25).abs() <= 0.02, "{counts:?}");
        }
    }
}

#[test]
fn front_ninety_candidate_headings() {
    let line = straight_polyline("e", LatLon::new(0.0, 0.0), 90.0, 500.0);
    let s = sample_points(&RoadNetwork::new("t", vec![line]), 4000.0)
        .unwrap()
        .remove(0);
    assert!((s.headings.front - 90.0).abs() < 1e-9);
    assert!((s.headings.back - 270.0).abs() < 1e-9);
    assert!(s.headings.left.abs() < 1e-9);
    assert!((s.headings.right - 180.0).abs() < 1e-9);
}

fn golden_samples() -> Vec<geocurate_core::geo::GeoSample> {
    // 0.08 degrees due north along the prime meridian: 8895.6 m, three samples
    let line = Polyline {
        id: "meridian".into(),
        vertices: vec![LatLon::new(0.0, 0.0), LatLon::new(0.08, 0.0)],
        city: None,
        country: None,
    };
    let samples = sample_points(&RoadNetwork::new("golden", vec![line]), 4000.0).unwrap();
    samples.into_iter().map(|s| select_views(s, 42)).collect()
}

#[test]
fn three_sample_export_matches_golden() {
    let samples = golden_samples();
    assert_eq!(samples.len(), 3);
    let mut out = Vec::new();
    export_samples_csv(&samples, &mut out).unwrap();
    let golden = std::fs::read(fixture("samples_golden.csv")).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), String::from_utf8(golden).unwrap());
}

#[test]
fn export_round_trips_and_is_deterministic() {
    let samples = golden_samples();
    let mut a = Vec::new();
    let mut b = Vec::new();
    export_samples_csv(&samples, &mut a).unwrap();
    export_samples_csv(&golden_samples(), &mut b).unwrap();
    assert_eq!(a, b);
    let back = read_samples_csv(a.as_slice()).unwrap();
    let mut again = Vec::new();
    export_samples_csv(&back, &mut again).unwrap();
    assert_eq!(a, again);

    let mut empty = Vec::new();
    export_samples_csv(&[], &mut empty).unwrap();
    assert_eq!(
        String::from_utf8(empty).unwrap(),
        "id,lat,lon,road_bearing,front,back,left,right,view_x,view_y,source_polyline,arc_offset_m\n"
    );
}

#[test]
fn forward_projection_distances() {
    let start = LatLon::new(35.6762, 139.6503);
    for (km, bearing) in [(0.5, 10.0), (10.0, 100.0), (300.0, 200.0), (2000.0, 300.0)] {
        let end = destination(start, bearing, km * 1000.0);
        let d = oracle_haversine_km((start.lat, start.lon), (end.lat, end.lon));
        assert!((d - km).abs() < 1e-9 * km.max(1.0), "{km}: {d}");
    }
}

fn coord() -> impl Strategy<Value = LatLon> {
    (-90.0..=90.0f64, -180.0..=180.0f64).prop_map(|(lat, lon)| LatLon::new(lat, lon))
}

proptest! {
    #[test]
    fn distance_matches_oracle(a in coord(), b in coord()) {
        let ours = geodesic_distance(a, b);
        let oracle = oracle_haversine_km((a.lat, a.lon), (b.lat, b.lon));
        prop_assert!((ours - oracle).abs() <= 1e-9 * oracle.max(1.0));
    }

    #[test]
    fn distance_axioms(a in coord(), b in coord(), c in coord()) {
        let ab = geodesic_distance(a, b);
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, geodesic_distance(b, a));
        prop_assert!(ab <= geodesic_distance(a, c) + geodesic_distance(c, b) + 1e-9);
    }

    #[test]
    fn sample_spacing_and_headings(
        start in (-60.0..60.0f64, -170.0..170.0f64),
        bearing in 0.0..360.0f64,
        length in 1.0..30_000.0f64,
    ) {
        let line = straight_polyline("q", LatLon::new(start.0, start.1), bearing, length);
        let samples = sample_points(&RoadNetwork::new("t", vec![line]), 4000.0).unwrap();
        let regular: Vec<_> = samples.iter().filter(|s| s.arc_offset_m % 4000.0 == 0.0).collect();
        for w in regular.windows(2) {
            let d = geodesic_distance_m(w[0].position, w[1].position);
            prop_assert!((d - 4000.0).abs() < 1.0, "spacing {}", d);
        }
        for s in &samples {
            let h = s.headings;
            prop_assert_eq!(h.front, s.road_bearing);
            prop_assert_eq!(h.back, (h.front + 180.0) % 360.0);
            prop_assert_eq!(h.left, (h.front + 270.0) % 360.0);
            prop_assert_eq!(h.right, (h.front + 90.0) % 360.0);
        }
    }
}
