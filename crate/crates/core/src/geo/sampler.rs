//! Interval sampling along road polylines and camera-view selection.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::geodesy::{final_bearing, geodesic_distance_m, initial_bearing, interpolate, normalize_degrees, LatLon};
use super::network::{Polyline, RoadNetwork};

/// Default spacing between sampling points along a road, metres.
pub const DEFAULT_INTERVAL_M: f64 = 4000.0;

/// Header of the sampling-point CSV.
pub const SAMPLES_CSV_HEADER: [&str; 12] = [
    "id",
    "lat",
    "lon",
    "road_bearing",
    "front",
    "back",
    "left",
    "right",
    "view_x",
    "view_y",
    "source_polyline",
    "arc_offset_m",
];

// Slack for accumulated floating error when comparing arc offsets, metres.
const OFFSET_EPS_M: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("interval must be positive and finite, got {0}")]
    BadInterval(f64),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid sample row {row}: {message}")]
    BadRow { row: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Camera headings at a sampling point, degrees clockwise from north.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Headings {
    pub front: f64,
    pub back: f64,
    pub left: f64,
    pub right: f64,
}

impl Headings {
    pub fn from_front(front: f64) -> Self {
        let front = normalize_degrees(front);
        Self {
            front,
            back: normalize_degrees(front + 180.0),
            left: normalize_degrees(front + 270.0),
            right: normalize_degrees(front + 90.0),
        }
    }

    pub fn lateral(&self, view: LateralView) -> f64 {
        match view {
            LateralView::Left => self.left,
            LateralView::Right => self.right,
        }
    }

    pub fn axial(&self, view: AxialView) -> f64 {
        match view {
            AxialView::Front => self.front,
            AxialView::Back => self.back,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LateralView {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxialView {
    Front,
    Back,
}

impl fmt::Display for LateralView {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LateralView::Left => "left",
            LateralView::Right => "right",
        })
    }
}

impl fmt::Display for AxialView {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AxialView::Front => "front",
            AxialView::Back => "back",
        })
    }
}

impl FromStr for LateralView {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "left" => Ok(LateralView::Left),
            "right" => Ok(LateralView::Right),
            _ => Err(format!("expected left|right, got {s:?}")),
        }
    }
}

impl FromStr for AxialView {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "front" => Ok(AxialView::Front),
            "back" => Ok(AxialView::Back),
            _ => Err(format!("expected front|back, got {s:?}")),
        }
    }
}

/// The two views kept for a sampling point: one lateral, one along the road.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ViewPair {
    pub x: LateralView,
    pub y: AxialView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoSample {
    pub id: String,
    pub position: LatLon,
    pub road_bearing: f64,
    pub headings: Headings,
    pub selected_views: Option<ViewPair>,
    pub source_polyline: String,
    pub arc_offset_m: f64,
}

/// Emits sampling points every `interval_m` metres of arc length along each
/// polyline, anchored at the polyline start.
///
/// A trailing point at the end vertex is added only when it lies at least
/// half an interval beyond the last regular sample.
pub fn sample_points(network: &RoadNetwork, interval_m: f64) -> Result<Vec<GeoSample>, SampleError> {
    if !(interval_m.is_finite() && interval_m > 0.0) {
        return Err(SampleError::BadInterval(interval_m));
    }
    Ok(network
        .polylines
        .iter()
        .flat_map(|p| sample_polyline(p, interval_m))
        .collect())
}

pub fn sample_polyline(polyline: &Polyline, interval_m: f64) -> Vec<GeoSample> {
    let vertices = &polyline.vertices;
    if vertices.len() < 2 {
        return Vec::new();
    }
    // cumulative[i] = arc length from the start to vertex i
    let mut cumulative = Vec::with_capacity(vertices.len());
    cumulative.push(0.0);
    for w in vertices.windows(2) {
        let last = *cumulative.last().unwrap();
        cumulative.push(last + geodesic_distance_m(w[0], w[1]));
    }
    let total = *cumulative.last().unwrap();

    let mut offsets = Vec::new();
    let mut k = 0usize;
    loop {
        let offset = k as f64 * interval_m;
        if offset > total + OFFSET_EPS_M {
            break;
        }
        offsets.push(offset.min(total));
        k += 1;
    }
    let last = *offsets.last().unwrap();
    if total - last >= interval_m / 2.0 {
        offsets.push(total);
    }

    let mut segment = 0usize;
    offsets
        .into_iter()
        .enumerate()
        .map(|(index, offset)| {
            // advance to the segment [segment, segment + 1] containing offset
            while segment + 2 < vertices.len() && offset >= cumulative[segment + 1] {
                segment += 1;
            }
            let (a, b) = (vertices[segment], vertices[segment + 1]);
            let seg_len = cumulative[segment + 1] - cumulative[segment];
            let along = offset - cumulative[segment];
            let fraction = if seg_len > 0.0 {
                (along / seg_len).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let position = interpolate(a, b, fraction);
            let road_bearing = if seg_len - along <= OFFSET_EPS_M {
                final_bearing(a, b)
            } else {
                initial_bearing(position, b)
            };
            GeoSample {
                id: format!("{}:{index}", polyline.id),
                position,
                road_bearing,
                headings: Headings::from_front(road_bearing),
                selected_views: None,
                source_polyline: polyline.id.clone(),
                arc_offset_m: offset,
            }
        })
        .collect()
}

/// Picks one lateral and one axial view, uniformly and reproducibly for a
/// given `(sample.id, seed)`.
pub fn select_views(mut sample: GeoSample, seed: u64) -> GeoSample {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(sample.id.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(key);
    let x = if rng.random::<bool>() {
        LateralView::Left
    } else {
        LateralView::Right
    };
    let y = if rng.random::<bool>() {
        AxialView::Front
    } else {
        AxialView::Back
    };
    sample.selected_views = Some(ViewPair { x, y });
    sample
}

/// Orders samples by `(source_polyline, arc_offset_m)`.
pub fn sort_samples(samples: &mut [GeoSample]) {
    samples.sort_by(|a, b| {
        a.source_polyline
            .cmp(&b.source_polyline)
            .then(a.arc_offset_m.total_cmp(&b.arc_offset_m))
    });
}

/// Writes the sampling CSV. Rows are sorted by polyline and arc offset.
pub fn export_samples_csv<W: Write>(samples: &[GeoSample], out: W) -> Result<(), SampleError> {
    let mut sorted = samples.to_vec();
    sort_samples(&mut sorted);
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    writer.write_record(SAMPLES_CSV_HEADER)?;
    let f = |v: f64| format!("{v:.7}");
    for s in &sorted {
        let (vx, vy) = match s.selected_views {
            Some(v) => (v.x.to_string(), v.y.to_string()),
            None => (String::new(), String::new()),
        };
        writer.write_record([
            s.id.clone(),
            f(s.position.lat),
            f(s.position.lon),
            f(s.road_bearing),
            f(s.headings.front),
            f(s.headings.back),
            f(s.headings.left),
            f(s.headings.right),
            vx,
            vy,
            s.source_polyline.clone(),
            f(s.arc_offset_m),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a sampling CSV written by [`export_samples_csv`].
pub fn read_samples_csv<R: Read>(input: R) -> Result<Vec<GeoSample>, SampleError> {
    let mut reader = csv::Reader::from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header != SAMPLES_CSV_HEADER {
        return Err(SampleError::BadRow {
            row: 0,
            message: format!("unexpected header {header:?}"),
        });
    }
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let bad = |message: String| SampleError::BadRow { row, message };
        let num = |idx: usize| -> Result<f64, SampleError> {
            record[idx]
                .parse::<f64>()
                .map_err(|e| bad(format!("column {}: {e}", SAMPLES_CSV_HEADER[idx])))
        };
        let selected_views = match (&record[8], &record[9]) {
            ("", "") => None,
            (x, y) => Some(ViewPair {
                x: x.parse().map_err(bad)?,
                y: y.parse().map_err(bad)?,
            }),
        };
        out.push(GeoSample {
            id: record[0].to_owned(),
            position: LatLon::new(num(1)?, num(2)?),
            road_bearing: num(3)?,
            headings: Headings {
                front: num(4)?,
                back: num(5)?,
                left: num(6)?,
                right: num(7)?,
            },
            selected_views,
            source_polyline: record[10].to_owned(),
            arc_offset_m: num(11)?,
        });
    }
    Ok(out)
}
