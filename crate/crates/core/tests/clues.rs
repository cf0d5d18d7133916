use std::collections::HashMap;
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use geocurate_core::clues::{
    export_location_corpus, export_reasoning_corpus, filter_geo_entities, ingest_clues, join_curated, read_geotags,
    ClueRecord, GazetteerTagger, GeoTag, TuningAnswer,
};
use geocurate_core::eval::Gazetteer;
use geocurate_core::jsonl::write_jsonl;
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn open(name: &str) -> BufReader<File> {
    BufReader::new(File::open(fixture(name)).unwrap())
}

#[test]
fn ten_line_fixture_with_two_malformed_lines() {
    let report = ingest_clues(open("clues_10.jsonl")).unwrap();
    assert_eq!(report.records.len(), 8);
    assert_eq!(report.duplicates, 0);
    let lines: Vec<usize> = report.rejections.iter().map(|r| r.line).collect();
    assert_eq!(lines, [3, 8]);
    assert!(report.rejections.iter().all(|r| r.reason.starts_with("malformed JSON")));
    let derived = report.records.iter().find(|r| r.text.contains("Norway")).unwrap();
    assert!(derived.id.starts_with("clue-"));
}

#[test]
fn duplicates_collapse_and_missing_fields_reject() {
    let line = r#"{"text":"kerbs in Brazil","image_ref":"a.jpg","country":"Brazil"}"#;
    let input = format!("{line}\n{line}\n{{\"text\":\"no country\",\"image_ref\":\"b.jpg\"}}\n");
    let report = ingest_clues(input.as_bytes()).unwrap();
    assert_eq!(report.records.len(), 1);
    assert_eq!(report.duplicates, 1);
    assert_eq!(report.rejections.len(), 1);
    assert!(report.rejections[0].reason.contains("country"));
}

#[test]
fn twenty_clue_partition_matches_substring_oracle() {
    let records = ingest_clues(open("clues_20.jsonl")).unwrap().records;
    assert_eq!(records.len(), 20);
    let tagger = GazetteerTagger::from_gazetteer(Gazetteer::builtin());
    let out = filter_geo_entities(records, &tagger, 0);

    // word-bounded substring matching over the gazetteer, run once offline
    let mut kept: Vec<&str> = out.kept.iter().map(|r| r.id.as_str()).collect();
    kept.sort();
    assert_eq!(
        kept,
        ["t01", "t02", "t03", "t05", "t06", "t08", "t11", "t12", "t14", "t17", "t19"]
    );
    assert_eq!(out.dropped.len(), 9);
    for r in &out.kept {
        assert!(!r.entities.is_empty());
        for e in &r.entities {
            assert!(r.text.contains(e.as_str()), "{e:?} not verbatim in {:?}", r.text);
        }
    }
    let chile = out.kept.iter().find(|r| r.id == "t01").unwrap();
    assert_eq!(chile.entities, ["Chile"]);
    let buenos = out.kept.iter().find(|r| r.id == "t19").unwrap();
    assert_eq!(buenos.entities, ["Buenos Aires"]);
}

fn stage1_jsonl(records: &[ClueRecord]) -> String {
    let out = export_reasoning_corpus(records);
    let mut buf = Vec::new();
    write_jsonl(&out.examples, &mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn five_record_stage1_golden() {
    let records: Vec<ClueRecord> = ingest_clues(open("clues_10.jsonl"))
        .unwrap()
        .records
        .into_iter()
        .take(5)
        .collect();
    let golden = std::fs::read_to_string(fixture("stage1_golden.jsonl")).unwrap();
    assert_eq!(stage1_jsonl(&records), golden);
    for line in golden.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert!(!v["answer"]["reasons"].as_str().unwrap().is_empty());
        assert!(v["answer"].get("city").is_none());
    }
    assert_eq!(stage1_jsonl(&[]), "");
}

#[test]
fn seventy_record_join_matches_oracle() {
    let ids_text = std::fs::read_to_string(fixture("curated_70.txt")).unwrap();
    let ids: Vec<&str> = ids_text.lines().collect();
    assert_eq!(ids.len(), 70);
    let tags = read_geotags(open("geotags_80.jsonl")).unwrap();

    // oracle: hash join, count rows with both fields non-blank
    let by_id: HashMap<&str, &GeoTag> = tags.iter().map(|t| (t.image_id.as_str(), t)).collect();
    let blank = |v: &Option<String>| v.as_deref().is_none_or(|s| s.trim().is_empty());
    let complete = ids
        .iter()
        .filter(|id| by_id.get(*id).is_some_and(|t| !blank(&t.country) && !blank(&t.city)))
        .count();
    assert_eq!(complete, 55);

    let joined = join_curated(&ids, &tags);
    let out = export_location_corpus(&joined);
    assert_eq!(out.examples.len(), complete);
    assert_eq!(out.skipped.len(), ids.len() - complete);
    for ex in &out.examples {
        assert!(matches!(ex.answer, TuningAnswer::Location { .. }));
        let v = serde_json::to_value(ex).unwrap();
        assert!(v["answer"].get("reasons").is_none());
    }
    let order: Vec<&str> = out
        .examples
        .iter()
        .map(|e| e.id.as_str())
        .chain(out.skipped.iter().map(|s| s.id.as_str()))
        .collect();
    assert_eq!(order.len(), 70);
}

#[test]
fn ingest_filter_export_is_idempotent() {
    let tagger = GazetteerTagger::from_gazetteer(Gazetteer::builtin());
    let first = filter_geo_entities(ingest_clues(open("clues_20.jsonl")).unwrap().records, &tagger, 0).kept;
    let mut buf = Vec::new();
    write_jsonl(&first, &mut buf).unwrap();
    let second = filter_geo_entities(ingest_clues(buf.as_slice()).unwrap().records, &tagger, 0).kept;
    assert_eq!(first, second);
    assert_eq!(stage1_jsonl(&first), stage1_jsonl(&second));
}
