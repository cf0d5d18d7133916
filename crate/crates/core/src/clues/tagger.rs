use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ClueRecord;
use crate::eval::{fold_name, Gazetteer};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TaggerError {
    /// Transient failure; the call may be retried.
    #[error("tagger unavailable: {0}")]
    Unavailable(String),
    #[error("tagger rejected input: {0}")]
    Rejected(String),
}

/// Finds place-name entities in free text.
pub trait Tagger {
    /// Returns place entities as they appear in `text`.
    fn tag(&self, text: &str) -> Result<Vec<String>, TaggerError>;
}

impl<T: Tagger + ?Sized> Tagger for &T {
    fn tag(&self, text: &str) -> Result<Vec<String>, TaggerError> {
        (**self).tag(text)
    }
}

/// Names with at most this many alphanumeric characters must match with
/// their original case, so that "US" does not fire on "us".
const SHORT_NAME_CHARS: usize = 3;

/// Whole-word matcher over the gazetteer's city, alias and country names.
#[derive(Debug, Clone)]
pub struct GazetteerTagger {
    /// folded token sequence -> original spellings when case must match
    /// (`None` when any variant is long enough to match case-insensitively)
    names: HashMap<Vec<String>, Option<HashSet<Vec<String>>>>,
    max_tokens: usize,
}

/// Maximal runs of alphanumeric characters with their byte spans.
fn tokens(text: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_alphanumeric(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, text.len()));
    }
    out
}

fn token_strings(text: &str) -> Vec<String> {
    tokens(text).into_iter().map(|(s, e)| text[s..e].to_owned()).collect()
}

impl GazetteerTagger {
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut tagger = Self {
            names: HashMap::new(),
            max_tokens: 0,
        };
        for name in names {
            tagger.add(name.as_ref());
        }
        tagger
    }

    fn add(&mut self, name: &str) {
        let original = token_strings(name);
        if original.is_empty() {
            return;
        }
        let folded: Vec<String> = original.iter().map(|t| fold_name(t)).collect();
        let short = original.iter().map(|t| t.chars().count()).sum::<usize>() <= SHORT_NAME_CHARS;
        self.max_tokens = self.max_tokens.max(folded.len());
        let slot = self.names.entry(folded).or_insert_with(|| Some(HashSet::new()));
        match (slot, short) {
            (Some(variants), true) => {
                variants.insert(original);
            }
            (slot, false) => *slot = None,
            (None, true) => {}
        }
    }

    /// City names, aliases and countries from `g`, plus the spellings in its
    /// alias table (short alias keys are treated as upper-case acronyms).
    pub fn from_gazetteer(g: &Gazetteer) -> Self {
        let mut names: Vec<String> = Vec::new();
        for e in g.entries() {
            names.push(e.city.clone());
            names.push(e.country.clone());
            names.extend(e.aliases.iter().cloned());
        }
        for key in g.normalizer().alias_keys() {
            let alnum = key.chars().filter(|c| c.is_alphanumeric()).count();
            names.push(if alnum <= SHORT_NAME_CHARS {
                key.to_uppercase()
            } else {
                key.to_owned()
            });
        }
        names.sort();
        names.dedup();
        Self::new(names)
    }

    /// Longest-match scan; returns verbatim spans in order of appearance,
    /// without repeats.
    pub fn find(&self, text: &str) -> Vec<String> {
        let spans = tokens(text);
        let folded: Vec<String> = spans.iter().map(|&(s, e)| fold_name(&text[s..e])).collect();
        let mut found: Vec<String> = Vec::new();
        let mut i = 0;
        while i < spans.len() {
            let longest =
                (1..=self.max_tokens.min(spans.len() - i))
                    .rev()
                    .find(|&k| match self.names.get(&folded[i..i + k]) {
                        None => false,
                        Some(None) => true,
                        Some(Some(variants)) => {
                            let original: Vec<String> =
                                spans[i..i + k].iter().map(|&(s, e)| text[s..e].to_owned()).collect();
                            variants.contains(&original)
                        }
                    });
            match longest {
                Some(k) => {
                    let entity = text[spans[i].0..spans[i + k - 1].1].to_owned();
                    if !found.contains(&entity) {
                        found.push(entity);
                    }
                    i += k;
                }
                None => i += 1,
            }
        }
        found
    }
}

impl Tagger for GazetteerTagger {
    fn tag(&self, text: &str) -> Result<Vec<String>, TaggerError> {
        Ok(self.find(text))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropCause {
    NoEntity,
    TaggerUnavailable,
    TaggerRejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedClue {
    pub record: ClueRecord,
    pub cause: DropCause,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterOutcome {
    pub kept: Vec<ClueRecord>,
    pub dropped: Vec<DroppedClue>,
}

/// Keeps records in which the tagger finds at least one place entity and
/// stores the entities on them. Unavailable taggers are retried `retries`
/// times before the record is dropped.
pub fn filter_geo_entities<T: Tagger>(records: Vec<ClueRecord>, tagger: &T, retries: usize) -> FilterOutcome {
    let mut out = FilterOutcome::default();
    for mut record in records {
        let mut attempt = 0;
        let result = loop {
            match tagger.tag(&record.text) {
                Err(TaggerError::Unavailable(_)) if attempt < retries => attempt += 1,
                other => break other,
            }
        };
        match result {
            Ok(entities) if !entities.is_empty() => {
                record.entities = entities;
                out.kept.push(record);
            }
            Ok(_) => out.dropped.push(DroppedClue {
                record,
                cause: DropCause::NoEntity,
                detail: None,
            }),
            Err(e) => {
                let cause = match e {
                    TaggerError::Unavailable(_) => DropCause::TaggerUnavailable,
                    TaggerError::Rejected(_) => DropCause::TaggerRejected,
                };
                out.dropped.push(DroppedClue {
                    record,
                    cause,
                    detail: Some(e.to_string()),
                });
            }
        }
    }
    out
}
