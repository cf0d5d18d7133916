//! Textual geo-clues: ingestion, place-entity filtering and export of the
//! two fine-tuning corpora (country reasoning, then country + city).

mod export;
mod ingest;
mod tagger;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use export::{
    export_location_corpus, export_reasoning_corpus, join_curated, read_geotags, ExportOutcome, GeoTag, LocationTag,
    SkippedExample, TuningAnswer, TuningExample,
};
pub use ingest::{ingest_clues, IngestReport, Rejection};
pub use tagger::{filter_geo_entities, DropCause, DroppedClue, FilterOutcome, GazetteerTagger, Tagger, TaggerError};

#[derive(Debug, Error)]
pub enum ClueError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClueRecord {
    pub id: String,
    pub text: String,
    pub image_ref: String,
    pub country: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub city: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub entities: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_ref: Option<String>,
}
