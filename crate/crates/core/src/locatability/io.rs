//! Readers and writers for profiles, embeddings, weights and scores.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{
    LabelSchema, LocatabilityError, LocatabilityScore, LocatabilityWeights, SegmentationProfile, UNIT_NORM_TOL,
};
use crate::jsonl::{read_jsonl, write_jsonl, JsonlError};

impl From<JsonlError> for LocatabilityError {
    fn from(e: JsonlError) -> Self {
        match e {
            JsonlError::Json { line, source } => LocatabilityError::Format {
                line,
                message: source.to_string(),
            },
            JsonlError::Io(e) => LocatabilityError::Io(e),
        }
    }
}

/// Reads segmentation profiles (one JSON object per line), validating each.
pub fn read_profiles<R: BufRead>(reader: R) -> Result<Vec<SegmentationProfile>, LocatabilityError> {
    let rows: Vec<(usize, SegmentationProfile)> = read_jsonl(reader)?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(rows.len());
    for (line, p) in rows {
        p.validate().map_err(|e| LocatabilityError::Format {
            line,
            message: e.to_string(),
        })?;
        if !seen.insert(p.image_id.clone()) {
            return Err(LocatabilityError::Format {
                line,
                message: format!("duplicate image_id {:?}", p.image_id),
            });
        }
        out.push(p);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    Clue,
    Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub id: String,
    pub kind: EmbeddingKind,
    pub vector: Vec<f64>,
}

/// Validated clue and label embeddings sharing one dimensionality.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingSet {
    pub clues: Vec<EmbeddingRecord>,
    pub labels: Vec<EmbeddingRecord>,
}

impl EmbeddingSet {
    /// Builds the label schema from label records in file order.
    pub fn label_schema(&self, id: &str) -> Result<LabelSchema, LocatabilityError> {
        LabelSchema::new(id, self.labels.iter().map(|r| r.id.clone()).collect())
    }

    pub fn clue_vectors(&self) -> Vec<&[f64]> {
        self.clues.iter().map(|r| r.vector.as_slice()).collect()
    }

    pub fn label_vectors(&self) -> Vec<&[f64]> {
        self.labels.iter().map(|r| r.vector.as_slice()).collect()
    }

    pub fn dimension(&self) -> Option<usize> {
        self.clues.iter().chain(&self.labels).map(|r| r.vector.len()).next()
    }
}

/// Reads an embeddings JSONL file and checks ids, dimensions and unit norms.
pub fn read_embeddings<R: BufRead>(reader: R) -> Result<EmbeddingSet, LocatabilityError> {
    let rows: Vec<(usize, EmbeddingRecord)> = read_jsonl(reader)?;
    let mut set = EmbeddingSet::default();
    let mut dim = None;
    let mut seen = HashSet::new();
    for (line, rec) in rows {
        let fail = |message: String| LocatabilityError::Format { line, message };
        if !seen.insert((rec.kind, rec.id.clone())) {
            return Err(fail(format!("duplicate {:?} id {:?}", rec.kind, rec.id)));
        }
        match dim {
            None => dim = Some(rec.vector.len()),
            Some(d) if d != rec.vector.len() => {
                return Err(fail(format!("dimension {} differs from {d}", rec.vector.len())))
            }
            _ => {}
        }
        let norm = rec.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(fail(format!("vector {:?} has norm {norm}, expected 1", rec.id)));
        }
        match rec.kind {
            EmbeddingKind::Clue => set.clues.push(rec),
            EmbeddingKind::Label => set.labels.push(rec),
        }
    }
    Ok(set)
}

/// On-disk form of [`LocatabilityWeights`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsArtifact {
    pub label_schema_id: String,
    pub tau: f64,
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus_id: Option<String>,
}

impl WeightsArtifact {
    pub fn new(weights: &LocatabilityWeights, labels: Option<Vec<String>>) -> Self {
        Self {
            label_schema_id: weights.label_schema_id.clone(),
            tau: weights.tau,
            weights: weights.weights.clone(),
            labels,
            corpus_id: Some(weights.corpus_id.clone()),
        }
    }

    pub fn into_weights(self) -> LocatabilityWeights {
        LocatabilityWeights {
            weights: self.weights,
            label_schema_id: self.label_schema_id,
            tau: self.tau,
            corpus_id: self.corpus_id.unwrap_or_default(),
        }
    }
}

pub fn write_weights<W: Write>(artifact: &WeightsArtifact, mut out: W) -> Result<(), LocatabilityError> {
    serde_json::to_writer_pretty(&mut out, artifact).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn read_weights<R: std::io::Read>(reader: R) -> Result<WeightsArtifact, LocatabilityError> {
    let artifact: WeightsArtifact = serde_json::from_reader(reader).map_err(|e| LocatabilityError::Format {
        line: e.line(),
        message: e.to_string(),
    })?;
    let bad = |message: String| LocatabilityError::Format { line: 0, message };
    if artifact.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(bad("weights must be finite and non-negative".into()));
    }
    let sum: f64 = artifact.weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(bad(format!("weights sum to {sum}, expected 1")));
    }
    if let Some(labels) = &artifact.labels {
        if labels.len() != artifact.weights.len() {
            return Err(bad(format!(
                "{} labels for {} weights",
                labels.len(),
                artifact.weights.len()
            )));
        }
    }
    Ok(artifact)
}

pub fn read_scores<R: BufRead>(reader: R) -> Result<Vec<LocatabilityScore>, LocatabilityError> {
    Ok(read_jsonl(reader)?.into_iter().map(|(_, s)| s).collect())
}

pub fn write_scores<W: Write>(scores: &[LocatabilityScore], out: W) -> Result<(), LocatabilityError> {
    Ok(write_jsonl(scores, out)?)
}
