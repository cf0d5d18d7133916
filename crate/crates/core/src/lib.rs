//! Curation and evaluation toolkit for street-view geo-localization.
//!
//! - [`geo`]: road-network ingestion, spherical geodesy and interval sampling
//! - [`locatability`]: clue/label similarity weights and per-image scores
//! - [`clues`]: clue ingestion, place-entity filtering, tuning-corpus export
//! - [`prediction`]: the evaluation prompt and tolerant answer parsing
//! - [`eval`]: accuracy/recall/F1, gazetteer geocoding, threshold accuracy
//!
//! Everything here is synchronous and free of I/O beyond the readers and
//! writers callers pass in.

pub mod clues;
pub mod eval;
pub mod geo;
pub mod jsonl;
pub mod locatability;
pub mod prediction;
