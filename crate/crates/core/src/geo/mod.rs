//! Road networks, geodesy and street-view sampling points.

pub mod geodesy;
pub mod network;
pub mod sampler;

pub use geodesy::{destination, geodesic_distance, geodesic_distance_m, initial_bearing, LatLon, EARTH_RADIUS_KM};
pub use network::{parse_road_network, read_road_network, NetworkError, Polyline, RoadNetwork};
pub use sampler::{
    export_samples_csv, read_samples_csv, sample_points, select_views, AxialView, GeoSample, Headings, LateralView,
    SampleError, ViewPair, DEFAULT_INTERVAL_M,
};
