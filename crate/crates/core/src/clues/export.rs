use std::collections::HashMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::{ClueError, ClueRecord};
use crate::jsonl::{read_jsonl, JsonlError};
use crate::prediction::{COUNTRY_CITY_PROMPT, COUNTRY_REASONS_PROMPT};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TuningAnswer {
    /// Country-level reasoning target.
    Reasoning { country: String, reasons: String },
    /// Location target without reasoning.
    Location { country: String, city: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TuningExample {
    pub id: String,
    pub image_ref: String,
    pub question: String,
    pub answer: TuningAnswer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedExample {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExportOutcome {
    pub examples: Vec<TuningExample>,
    pub skipped: Vec<SkippedExample>,
}

/// Reasoning corpus: one example per clue, answering with the clue's country
/// and the clue text as the reasons.
pub fn export_reasoning_corpus(records: &[ClueRecord]) -> ExportOutcome {
    let mut out = ExportOutcome::default();
    for r in records {
        let (country, reasons) = (r.country.trim(), r.text.trim());
        let problem = match (country.is_empty(), reasons.is_empty()) {
            (true, _) => Some("missing country"),
            (_, true) => Some("empty clue text"),
            _ => None,
        };
        if let Some(reason) = problem {
            out.skipped.push(SkippedExample {
                id: r.id.clone(),
                reason: reason.into(),
            });
            continue;
        }
        out.examples.push(TuningExample {
            id: r.id.clone(),
            image_ref: r.image_ref.clone(),
            question: COUNTRY_REASONS_PROMPT.to_owned(),
            answer: TuningAnswer::Reasoning {
                country: country.to_owned(),
                reasons: reasons.to_owned(),
            },
        });
    }
    out
}

/// Geo-tag of a street-view image, as used to build the location corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeoTag {
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub country: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub city: Option<String>,
}

pub fn read_geotags<R: BufRead>(reader: R) -> Result<Vec<GeoTag>, ClueError> {
    let rows: Vec<(usize, GeoTag)> = read_jsonl(reader).map_err(|e| match e {
        JsonlError::Json { line, source } => ClueError::Format {
            line,
            message: source.to_string(),
        },
        JsonlError::Io(e) => ClueError::Io(e),
    })?;
    Ok(rows.into_iter().map(|(_, t)| t).collect())
}

/// A curated image with whatever location it is tagged with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocationTag {
    pub image_id: String,
    pub image_ref: String,
    pub country: Option<String>,
    pub city: Option<String>,
}

/// Attaches geo-tags to the curated image ids, preserving their order.
/// Ids without a tag come back with no country or city.
pub fn join_curated(curated_ids: &[&str], tags: &[GeoTag]) -> Vec<LocationTag> {
    let by_id: HashMap<&str, &GeoTag> = tags.iter().map(|t| (t.image_id.as_str(), t)).collect();
    curated_ids
        .iter()
        .map(|&id| match by_id.get(id) {
            Some(t) => LocationTag {
                image_id: id.to_owned(),
                image_ref: t.image_ref.clone().unwrap_or_else(|| id.to_owned()),
                country: t.country.clone(),
                city: t.city.clone(),
            },
            None => LocationTag {
                image_id: id.to_owned(),
                image_ref: id.to_owned(),
                country: None,
                city: None,
            },
        })
        .collect()
}

/// Location corpus: country and city answers, no reasons.
pub fn export_location_corpus(curated: &[LocationTag]) -> ExportOutcome {
    let mut out = ExportOutcome::default();
    for tag in curated {
        let nonempty = |v: &Option<String>| v.as_deref().map(str::trim).filter(|s| !s.is_empty()).map(str::to_owned);
        match (nonempty(&tag.country), nonempty(&tag.city)) {
            (Some(country), Some(city)) => out.examples.push(TuningExample {
                id: tag.image_id.clone(),
                image_ref: tag.image_ref.clone(),
                question: COUNTRY_CITY_PROMPT.to_owned(),
                answer: TuningAnswer::Location { country, city },
            }),
            (country, city) => {
                let mut missing = Vec::new();
                if country.is_none() {
                    missing.push("country");
                }
                if city.is_none() {
                    missing.push("city");
                }
                out.skipped.push(SkippedExample {
                    id: tag.image_id.clone(),
                    reason: format!("missing {}", missing.join(" and ")),
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clue(id: &str, text: &str, country: &str) -> ClueRecord {
        ClueRecord {
            id: id.into(),
            text: text.into(),
            image_ref: format!("{id}.jpg"),
            country: country.into(),
            city: None,
            entities: vec![],
            embedding_ref: None,
        }
    }

    #[test]
    fn reasoning_example_for_chile_clue() {
        let text = "houses in central Chile are more likely to have terracotta tiled roofs";
        let out = export_reasoning_corpus(&[clue("c1", text, "Chile")]);
        assert_eq!(
            out.examples[0].answer,
            TuningAnswer::Reasoning {
                country: "Chile".into(),
                reasons: text.into()
            }
        );
        let json = serde_json::to_value(&out.examples[0]).unwrap();
        assert!(json["answer"].get("city").is_none());
    }

    #[test]
    fn missing_country_is_skipped() {
        let out = export_reasoning_corpus(&[clue("c1", "text", " ")]);
        assert!(out.examples.is_empty());
        assert_eq!(out.skipped[0].reason, "missing country");
    }

    #[test]
    fn location_examples() {
        let tags = vec![
            GeoTag {
                image_id: "img1".into(),
                image_ref: None,
                country: Some("Singapore".into()),
                city: Some("Singapore".into()),
            },
            GeoTag {
                image_id: "img2".into(),
                image_ref: None,
                country: Some("Chile".into()),
                city: None,
            },
        ];
        let joined = join_curated(&["img1", "img2", "img3"], &tags);
        let out = export_location_corpus(&joined);
        assert_eq!(out.examples.len(), 1);
        let json = serde_json::to_value(&out.examples[0]).unwrap();
        assert_eq!(json["answer"]["city"], "Singapore");
        assert!(json["answer"].get("reasons").is_none());
        assert_eq!(out.skipped.len(), 2);
        assert_eq!(out.skipped[1].reason, "missing country and city");
    }
}
