//! The run manifest: one entry per stage with input, parameter and output
//! hashes, linked into a hash chain in stage order.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "run-manifest.json";
const GENESIS: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ran,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub stage: String,
    pub status: StageStatus,
    /// Hash of stage name, parameters and input hashes.
    pub key: String,
    pub params: Value,
    /// Input name to content hash. Upstream artifacts are named by their
    /// path relative to the output directory, external inputs by config key.
    pub inputs: BTreeMap<String, String>,
    /// Output path (relative to the output directory) to content hash.
    pub outputs: BTreeMap<String, String>,
    pub prev: String,
    pub chain: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub stages: Vec<StageEntry>,
}

impl Default for RunManifest {
    fn default() -> Self {
        Self {
            version: 1,
            stages: Vec::new(),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> std::io::Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

pub fn stage_key(stage: &str, params: &Value, inputs: &BTreeMap<String, String>) -> String {
    let doc = serde_json::json!({ "stage": stage, "params": params, "inputs": inputs });
    sha256_hex(doc.to_string().as_bytes())
}

fn link(prev: &str, e: &StageEntry) -> String {
    let outputs = serde_json::to_string(&e.outputs).expect("map serialises");
    sha256_hex(format!("{prev}\n{}\n{}\n{outputs}", e.stage, e.key).as_bytes())
}

impl RunManifest {
    pub fn load(out_dir: &Path) -> Result<Self, String> {
        let path = out_dir.join(MANIFEST_FILE);
        match std::fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display())),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(format!("{}: {e}", path.display())),
        }
    }

    pub fn save(&self, out_dir: &Path) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serialises");
        text.push('\n');
        let tmp = out_dir.join(format!("{MANIFEST_FILE}.tmp"));
        std::fs::write(&tmp, text)?;
        std::fs::rename(tmp, out_dir.join(MANIFEST_FILE))
    }

    pub fn entry(&self, stage: &str) -> Option<&StageEntry> {
        self.stages.iter().find(|e| e.stage == stage)
    }

    /// Inserts or replaces the entry for its stage, keeps entries in `order`
    /// and relinks the chain.
    pub fn upsert(&mut self, entry: StageEntry, order: &[&str]) {
        self.stages.retain(|e| e.stage != entry.stage);
        self.stages.push(entry);
        let rank = |s: &str| order.iter().position(|o| *o == s).unwrap_or(usize::MAX);
        self.stages.sort_by_key(|e| rank(&e.stage));
        self.relink();
    }

    fn relink(&mut self) {
        let mut prev = GENESIS.to_owned();
        for e in &mut self.stages {
            e.prev = prev.clone();
            e.chain = link(&prev, e);
            prev = e.chain.clone();
        }
    }

    /// Checks the chain, every recorded output against the file on disk, and
    /// every upstream input hash against the producer's recorded output.
    pub fn verify(&self, out_dir: &Path) -> Vec<String> {
        let mut problems = Vec::new();
        let mut prev = GENESIS.to_owned();
        let mut produced: BTreeMap<&str, (&str, &str)> = BTreeMap::new();
        for e in &self.stages {
            if e.prev != prev || e.chain != link(&prev, e) {
                problems.push(format!("{}: chain link does not match", e.stage));
            }
            if e.key != stage_key(&e.stage, &e.params, &e.inputs) {
                problems.push(format!("{}: key does not match its params and inputs", e.stage));
            }
            for (name, hash) in &e.inputs {
                if let Some((producer, expected)) = produced.get(name.as_str()) {
                    if hash != expected {
                        problems.push(format!(
                            "{}: input {name} differs from what {producer} recorded",
                            e.stage
                        ));
                    }
                }
            }
            for (rel, hash) in &e.outputs {
                match hash_file(&out_dir.join(rel)) {
                    Ok(h) if &h == hash => {}
                    Ok(_) => problems.push(format!("{}: output {rel} changed on disk", e.stage)),
                    Err(err) => problems.push(format!("{}: output {rel}: {err}", e.stage)),
                }
                produced.insert(rel, (&e.stage, hash));
            }
            prev = e.chain.clone();
        }
        problems
    }
}
