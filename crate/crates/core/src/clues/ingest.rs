use std::collections::HashSet;
use std::io::BufRead;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{ClueError, ClueRecord};

/// A clue line that could not be loaded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub records: Vec<ClueRecord>,
    /// Lines whose `(text, image_ref)` pair had already been seen.
    pub duplicates: usize,
    pub rejections: Vec<Rejection>,
}

fn derived_id(text: &str, image_ref: &str) -> String {
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    h.update([0u8]);
    h.update(image_ref.as_bytes());
    format!("clue-{}", &hex::encode(h.finalize())[..12])
}

/// Loads clue JSONL. Lines that are not JSON objects or lack `text`,
/// `image_ref` or `country` are itemised as rejections, not errors.
pub fn ingest_clues<R: BufRead>(reader: R) -> Result<IngestReport, ClueError> {
    let mut report = IngestReport::default();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reject = |reason: String| Rejection { line: line_no, reason };
        let value: Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(e) => {
                report.rejections.push(reject(format!("malformed JSON: {e}")));
                continue;
            }
        };
        let Some(obj) = value.as_object() else {
            report.rejections.push(reject("not a JSON object".into()));
            continue;
        };
        let field = |name: &str| {
            obj.get(name)
                .and_then(Value::as_str)
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_owned)
        };
        let missing: Vec<&str> = ["text", "image_ref", "country"]
            .into_iter()
            .filter(|f| field(f).is_none())
            .collect();
        if !missing.is_empty() {
            report
                .rejections
                .push(reject(format!("missing required field(s): {}", missing.join(", "))));
            continue;
        }
        let (text, image_ref) = (field("text").unwrap(), field("image_ref").unwrap());
        if !seen.insert((text.clone(), image_ref.clone())) {
            report.duplicates += 1;
            continue;
        }
        let entities = obj
            .get("entities")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_str).map(str::to_owned).collect())
            .unwrap_or_default();
        report.records.push(ClueRecord {
            id: field("id").unwrap_or_else(|| derived_id(&text, &image_ref)),
            country: field("country").unwrap(),
            city: field("city"),
            entities,
            embedding_ref: field("embedding_ref"),
            text,
            image_ref,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CHILE: &str = r#"{"text":"houses in central Chile are more likely to have terracotta tiled roofs","image_ref":"img/chile1.jpg","country":"Chile"}"#;

    #[test]
    fn one_valid_line() {
        let r = ingest_clues(CHILE.as_bytes()).unwrap();
        assert_eq!(r.records.len(), 1);
        assert!(r.records[0].id.starts_with("clue-"));
        assert_eq!(r.records[0].city, None);
    }

    #[test]
    fn duplicates_collapse() {
        let text = format!("{CHILE}\n{CHILE}\n");
        let r = ingest_clues(text.as_bytes()).unwrap();
        assert_eq!((r.records.len(), r.duplicates), (1, 1));
    }

    #[test]
    fn rejections_carry_line_numbers() {
        let text = format!("{CHILE}\nnot json\n{{\"text\":\"x\",\"image_ref\":\"y\"}}\n[1,2]\n");
        let r = ingest_clues(text.as_bytes()).unwrap();
        assert_eq!(r.records.len(), 1);
        let lines: Vec<usize> = r.rejections.iter().map(|r| r.line).collect();
        assert_eq!(lines, vec![2, 3, 4]);
        assert!(r.rejections[1].reason.contains("country"));
    }

    #[test]
    fn explicit_id_is_kept() {
        let line = r#"{"id":"c7","text":"t","image_ref":"i","country":"Peru","city":"Lima"}"#;
        let r = ingest_clues(line.as_bytes()).unwrap();
        assert_eq!(r.records[0].id, "c7");
        assert_eq!(r.records[0].city.as_deref(), Some("Lima"));
    }
}
