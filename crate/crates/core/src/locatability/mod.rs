//! Locatability scoring of street-view images.
//!
//! The pipeline turns textual geo-clues and segmentation-label embeddings
//! into a per-label importance vector, then scores each image as the
//! weighted sum of its segmentation area ratios:
//!
//! ```text
//! clue x label cosine  ->  global min-max  ->  zero below tau
//!     ->  column means  ->  L1 normalise  =  weights
//! score(image) = sum_k ratios[k] * weights[k]
//! ```

mod curve;
mod io;
mod matrix;
mod score;

use thiserror::Error;

pub use curve::{class_proportion_curve, CurveBin};
pub use io::{
    read_embeddings, read_profiles, read_scores, read_weights, write_scores, write_weights, EmbeddingKind,
    EmbeddingRecord, EmbeddingSet, WeightsArtifact,
};
pub use matrix::{
    build_similarity_matrix, minmax_normalize, reduce_to_weights, threshold_zero, MatrixStage, SimilarityMatrix,
};
pub use score::{
    filter_by_locatability, locatability_score, partition_scores, LocatabilityScore, LocatabilityWeights, Partition,
};

/// Similarity threshold applied after normalisation when none is configured.
pub const DEFAULT_TAU: f64 = 0.5;

/// Images scoring at or above this value are considered highly locatable.
pub const DEFAULT_LOCATABILITY_THRESHOLD: f64 = 0.4;

// Allowed deviation from unit norm for input embeddings.
const UNIT_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum LocatabilityError {
    #[error("embedding dimension mismatch: expected {expected}, found {found} ({context})")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: String,
    },
    #[error("zero vector: {0}")]
    ZeroVector(String),
    #[error("vector {id} is not unit-normalised (norm {norm})")]
    NotUnitNorm { id: String, norm: f64 },
    #[error("no {0} vectors supplied")]
    Empty(&'static str),
    #[error("matrix is in stage {found:?}, expected {expected:?}")]
    WrongStage { expected: MatrixStage, found: MatrixStage },
    #[error(
        "similarity matrix is constant ({value}); min-max normalisation is undefined. \
         Check that the embedding service returned distinct vectors for clues and labels"
    )]
    DegenerateMatrix { value: f64 },
    #[error("every clue-label similarity fell below tau = {tau}; lower the threshold or add clues")]
    NoSignal { tau: f64 },
    #[error("label schema mismatch: profile uses {profile:?}, weights use {weights:?}")]
    SchemaMismatch { profile: String, weights: String },
    #[error("profile {image_id} has {found} ratios, weights have {expected}")]
    LengthMismatch {
        image_id: String,
        expected: usize,
        found: usize,
    },
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("invalid label schema: {0}")]
    InvalidSchema(String),
    #[error("invalid profile {image_id}: {reason}")]
    InvalidProfile { image_id: String, reason: String },
    #[error("threshold {0} outside [0, 1]")]
    BadThreshold(f64),
    #[error("bin width {0} outside (0, 1]")]
    BadBinWidth(f64),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ordered segmentation label names; index `k` of every profile and weight
/// vector refers to `labels[k]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSchema {
    pub id: String,
    pub labels: Vec<String>,
}

impl LabelSchema {
    pub fn new(id: impl Into<String>, labels: Vec<String>) -> Result<Self, LocatabilityError> {
        if labels.is_empty() {
            return Err(LocatabilityError::InvalidSchema("no labels".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for l in &labels {
            if l.trim().is_empty() {
                return Err(LocatabilityError::InvalidSchema("empty label name".into()));
            }
            if !seen.insert(l.as_str()) {
                return Err(LocatabilityError::InvalidSchema(format!("duplicate label {l:?}")));
            }
        }
        Ok(Self { id: id.into(), labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Per-image pixel-area fraction of each segmentation label.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SegmentationProfile {
    pub image_id: String,
    pub label_schema_id: String,
    pub ratios: Vec<f64>,
}

impl SegmentationProfile {
    /// Checks that every ratio is in `[0, 1]` and that they sum to at most 1.
    pub fn validate(&self) -> Result<(), LocatabilityError> {
        let invalid = |reason: String| LocatabilityError::InvalidProfile {
            image_id: self.image_id.clone(),
            reason,
        };
        if let Some(r) = self.ratios.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(invalid(format!("ratio {r} outside [0, 1]")));
        }
        let sum: f64 = self.ratios.iter().sum();
        // small slack for ratios that were rounded when serialised
        if sum > 1.0 + 1e-6 {
            return Err(invalid(format!("ratios sum to {sum} > 1")));
        }
        Ok(())
    }
}
