use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use futures::stream::{self, StreamExt};
use geocurate_core::prediction::{FailureCause, PredictionRecord, RefusalDetector, GEOLOC_PROMPT};
use serde::{Deserialize, Serialize};

use crate::client::{Gateway, ImageInput};
use crate::GatewayError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: String,
    pub image_ref: String,
}

/// Images to run, in the order results are reported.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    /// Directory relative image paths are resolved against.
    pub base_dir: Option<PathBuf>,
}

impl Manifest {
    /// Builds a manifest, rejecting empty and duplicate image ids.
    pub fn new(entries: Vec<ManifestEntry>, base_dir: Option<PathBuf>) -> Result<Self, GatewayError> {
        let mut seen = HashSet::new();
        for (i, e) in entries.iter().enumerate() {
            if e.image_id.trim().is_empty() || e.image_ref.trim().is_empty() {
                return Err(GatewayError::Manifest(format!(
                    "entry {}: empty image_id or image_ref",
                    i + 1
                )));
            }
            if !seen.insert(e.image_id.as_str()) {
                return Err(GatewayError::Manifest(format!("duplicate image_id {:?}", e.image_id)));
            }
        }
        Ok(Self { entries, base_dir })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Reads a manifest from CSV (`image_id,image_ref` header) or JSONL,
/// chosen by file extension.
pub fn read_manifest(path: &Path) -> Result<Manifest, GatewayError> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let file = File::open(path)?;
    let entries = if is_csv {
        let mut rdr = csv::Reader::from_reader(file);
        rdr.deserialize()
            .enumerate()
            .map(|(i, row)| row.map_err(|e| GatewayError::Manifest(format!("{} row {}: {e}", path.display(), i + 1))))
            .collect::<Result<Vec<ManifestEntry>, _>>()?
    } else {
        geocurate_core::jsonl::read_jsonl(BufReader::new(file))
            .map_err(|e| GatewayError::Manifest(format!("{}: {e}", path.display())))?
            .into_iter()
            .map(|(_, e)| e)
            .collect()
    };
    Manifest::new(entries, path.parent().map(Path::to_path_buf))
}

#[derive(Debug, Clone)]
pub struct BatchOptions {
    pub prompt: String,
    pub detector: RefusalDetector,
    /// Stop after issuing this many new requests (the batch is then
    /// incomplete and can be resumed from the checkpoint).
    pub limit: Option<usize>,
    /// Re-issue requests for images whose checkpointed record is a
    /// transport failure.
    pub retry_transport: bool,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self {
            prompt: GEOLOC_PROMPT.to_owned(),
            detector: RefusalDetector::default(),
            limit: None,
            retry_transport: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchOutcome {
    /// Records for every finished manifest entry, in manifest order.
    pub records: Vec<PredictionRecord>,
    /// Requests issued by this call.
    pub issued: usize,
    /// Entries found in the checkpoint and skipped.
    pub resumed: usize,
    /// New records whose request failed at the transport level.
    pub transport_failures: usize,
    pub complete: bool,
}

fn is_transport(rec: &PredictionRecord) -> bool {
    rec.failure_cause == Some(FailureCause::Transport)
}

/// Reads a checkpoint. A later record for the same image replaces an
/// earlier transport failure; any other repeat is corruption.
fn load_checkpoint(path: &Path) -> Result<HashMap<String, PredictionRecord>, GatewayError> {
    let mut done = HashMap::new();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(done),
        Err(e) => {
            return Err(GatewayError::Checkpoint {
                path: path.display().to_string(),
                line: 0,
                message: e.to_string(),
            })
        }
    };
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let fail = |message: String| GatewayError::Checkpoint {
            path: path.display().to_string(),
            line: i + 1,
            message,
        };
        let line = line.map_err(|e| fail(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PredictionRecord = serde_json::from_str(&line).map_err(|e| fail(e.to_string()))?;
        if let Some(prev) = done.insert(rec.image_id.clone(), rec) {
            if !is_transport(&prev) {
                return Err(fail(format!("image_id {:?} appears twice", prev.image_id)));
            }
        }
    }
    Ok(done)
}

/// Opens the checkpoint for appending, making sure the next record starts
/// on a fresh line.
fn open_for_append(path: &Path) -> Result<File, GatewayError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut file = OpenOptions::new().create(true).read(true).append(true).open(path)?;
    let len = file.metadata()?.len();
    if len > 0 {
        let mut last = [0u8; 1];
        file.seek(SeekFrom::Start(len - 1))?;
        file.read_exact(&mut last)?;
        if last[0] != b'\n' {
            file.write_all(b"\n")?;
        }
    }
    Ok(file)
}

/// Runs every manifest image not yet in the checkpoint through the
/// endpoint, at most `max_parallel` requests at a time. Each finished
/// record is appended to the checkpoint before the next one is collected.
///
/// An unreadable checkpoint aborts before any request is sent.
pub async fn batch_infer(
    gateway: &Gateway,
    manifest: &Manifest,
    checkpoint: &Path,
    options: &BatchOptions,
) -> Result<BatchOutcome, GatewayError> {
    let mut done = load_checkpoint(checkpoint)?;
    if options.retry_transport {
        done.retain(|_, rec| !is_transport(rec));
    }
    let resumed = manifest
        .entries
        .iter()
        .filter(|e| done.contains_key(&e.image_id))
        .count();

    let mut pending = Vec::new();
    for entry in manifest.entries.iter().filter(|e| !done.contains_key(&e.image_id)) {
        let image = ImageInput::from_ref(&entry.image_ref, manifest.base_dir.as_deref())?;
        pending.push((entry.image_id.clone(), image));
    }
    let budget = options.limit.unwrap_or(usize::MAX).min(pending.len());
    let complete = budget == pending.len();
    pending.truncate(budget);

    let mut writer = open_for_append(checkpoint)?;
    let parallel = gateway.config().max_parallel;
    let mut results = stream::iter(pending)
        .map(|(image_id, image)| async move {
            let start = Instant::now();
            match gateway.query_model(&image, &options.prompt).await {
                Ok(out) => {
                    PredictionRecord::from_response(image_id, &out.text, Some(out.latency_ms), &options.detector)
                }
                Err(e) => {
                    let latency = start.elapsed().as_millis() as u64;
                    PredictionRecord::transport_failure(image_id, &e.to_string(), Some(latency))
                }
            }
        })
        .buffer_unordered(parallel);

    let mut issued = 0;
    let mut transport_failures = 0;
    while let Some(record) = results.next().await {
        issued += 1;
        if is_transport(&record) {
            transport_failures += 1;
        }
        let mut line = serde_json::to_vec(&record).map_err(|e| GatewayError::Decode(e.to_string()))?;
        line.push(b'\n');
        writer.write_all(&line)?;
        writer.flush()?;
        done.insert(record.image_id.clone(), record);
    }
    writer.sync_data()?;

    let records = manifest
        .entries
        .iter()
        .filter_map(|e| done.get(&e.image_id).cloned())
        .collect();
    Ok(BatchOutcome {
        records,
        issued,
        resumed,
        transport_failures,
        complete,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str) -> ManifestEntry {
        ManifestEntry {
            image_id: id.into(),
            image_ref: format!("https://img/{id}.jpg"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert!(Manifest::new(vec![entry("a"), entry("b")], None).is_ok());
        let err = Manifest::new(vec![entry("a"), entry("a")], None).unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn manifest_formats() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("m.csv");
        std::fs::write(&csv, "image_id,image_ref\na,https://x/a.jpg\nb,https://x/b.jpg\n").unwrap();
        assert_eq!(read_manifest(&csv).unwrap().len(), 2);
        let jsonl = dir.path().join("m.jsonl");
        std::fs::write(&jsonl, "{\"image_id\":\"a\",\"image_ref\":\"https://x/a.jpg\"}\n").unwrap();
        assert_eq!(read_manifest(&jsonl).unwrap().len(), 1);
    }

    #[test]
    fn corrupt_checkpoint_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.jsonl");
        std::fs::write(&path, "{\"image_id\": \"a\"\n").unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(GatewayError::Checkpoint { line: 1, .. })
        ));
    }

    #[test]
    fn later_record_replaces_transport_failure() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.jsonl");
        let failed = PredictionRecord::transport_failure("a", "down", None);
        let ok = PredictionRecord::from_response(
            "a",
            "{'country': 'Chile', 'city': 'Santiago'}",
            None,
            &RefusalDetector::default(),
        );
        let lines = [&failed, &ok].map(|r| serde_json::to_string(r).unwrap()).join("\n");
        std::fs::write(&path, lines + "\n").unwrap();
        assert!(load_checkpoint(&path).unwrap()["a"].effective);

        let lines = [&ok, &ok].map(|r| serde_json::to_string(r).unwrap()).join("\n");
        std::fs::write(&path, lines).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(GatewayError::Checkpoint { line: 2, .. })
        ));
    }

    #[test]
    fn append_starts_on_fresh_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.jsonl");
        std::fs::write(&path, "x").unwrap();
        let mut f = open_for_append(&path).unwrap();
        f.write_all(b"y\n").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "x\ny\n");
    }
}
