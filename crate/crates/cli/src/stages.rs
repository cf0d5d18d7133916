//! Pipeline stages. Each stage declares its inputs, parameters and outputs;
//! [`Runner::execute`] hashes the inputs, skips the stage when the run
//! manifest already holds an identical result, and records the new entry
//! otherwise.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use geocurate_core::clues::{
    export_location_corpus, export_reasoning_corpus, filter_geo_entities, ingest_clues, join_curated, read_geotags,
    ClueRecord, ExportOutcome, GazetteerTagger, Tagger,
};
use geocurate_core::eval::{evaluate, read_truth, EvalReport, Gazetteer, NameNormalizer};
use geocurate_core::geo::{export_samples_csv, read_road_network, sample_points, select_views};
use geocurate_core::jsonl::{read_jsonl, write_jsonl};
use geocurate_core::locatability::{
    build_similarity_matrix, class_proportion_curve, locatability_score, minmax_normalize, partition_scores,
    read_embeddings, read_profiles, read_scores, read_weights, reduce_to_weights, threshold_zero, write_scores,
    write_weights, LabelSchema, LocatabilityScore, SegmentationProfile, WeightsArtifact,
};
use geocurate_core::prediction::{PredictionRecord, GEOLOC_PROMPT};
use geocurate_gateway::{batch_infer, read_manifest, BatchOptions, EndpointTagger, Gateway, GatewayError};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{PipelineConfig, TaggerSpec};
use crate::error::CliError;
use crate::manifest::{hash_file, sha256_hex, stage_key, RunManifest, StageEntry, StageStatus};

pub const SAMPLE: &str = "sample";
pub const WEIGHTS: &str = "weights";
pub const SCORE: &str = "score";
pub const CURATE: &str = "curate";
pub const CLUES_INGEST: &str = "clues-ingest";
pub const CLUES_FILTER: &str = "clues-filter";
pub const EXPORT_STAGE1: &str = "export-stage1";
pub const EXPORT_STAGE2: &str = "export-stage2";
pub const INFER: &str = "infer";
pub const EVAL: &str = "eval";
pub const REPORT: &str = "report";

/// Stage DAG in execution order.
pub const ORDER: [&str; 11] = [
    SAMPLE,
    WEIGHTS,
    SCORE,
    CURATE,
    CLUES_INGEST,
    CLUES_FILTER,
    EXPORT_STAGE1,
    EXPORT_STAGE2,
    INFER,
    EVAL,
    REPORT,
];

pub const SAMPLES_CSV: &str = "samples.csv";
pub const WEIGHTS_JSON: &str = "weights.json";
pub const SCORES_JSONL: &str = "scores.jsonl";
pub const CURATED_TXT: &str = "curated.txt";
pub const PARTITION_JSON: &str = "partition.json";
pub const CURVE_CSV: &str = "curve.csv";
pub const INGESTED_JSONL: &str = "clues/ingested.jsonl";
pub const REJECTIONS_JSONL: &str = "clues/rejections.jsonl";
pub const KEPT_JSONL: &str = "clues/kept.jsonl";
pub const DROPPED_JSONL: &str = "clues/dropped.jsonl";
pub const STAGE1_JSONL: &str = "train/stage1.jsonl";
pub const STAGE1_SKIPPED: &str = "train/stage1-skipped.jsonl";
pub const STAGE2_JSONL: &str = "train/stage2.jsonl";
pub const STAGE2_SKIPPED: &str = "train/stage2-skipped.jsonl";
pub const PREDICTIONS_JSONL: &str = "predictions.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const REPORT_CSV: &str = "report.csv";

/// Where a stage input comes from.
#[derive(Debug, Clone)]
struct Input {
    /// Name recorded in the manifest.
    name: String,
    path: PathBuf,
    /// Stage producing it; `None` for files named in the config.
    producer: Option<&'static str>,
}

struct Plan {
    stage: &'static str,
    params: Value,
    inputs: Vec<Input>,
    outputs: Vec<&'static str>,
}

/// Per-verb overrides of config inputs.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub clues_input: Option<PathBuf>,
    pub infer_checkpoint: Option<PathBuf>,
    pub infer_limit: Option<usize>,
    pub retry_failed: bool,
    pub predictions: Option<PathBuf>,
}

pub struct Runner {
    pub cfg: PipelineConfig,
    pub out: PathBuf,
    pub force: bool,
    pub overrides: Overrides,
    /// Progress lines go here (stderr for the binary).
    pub log: Box<dyn FnMut(&str)>,
}

fn io_err(stage: &'static str, path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::stage(stage, format!("{}: {e}", path.display()))
}

fn create(stage: &'static str, path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(stage, dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_err(stage, path, e))
}

fn open(stage: &'static str, path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| io_err(stage, path, e))
}

fn write_lines<T: Serialize>(stage: &'static str, path: &Path, items: &[T]) -> Result<(), CliError> {
    let mut w = create(stage, path)?;
    write_jsonl(items, &mut w).map_err(|e| io_err(stage, path, e))?;
    w.flush().map_err(|e| io_err(stage, path, e))
}

fn write_text(stage: &'static str, path: &Path, text: &str) -> Result<(), CliError> {
    let mut w = create(stage, path)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| io_err(stage, path, e))
}

fn read_lines<T: serde::de::DeserializeOwned>(stage: &'static str, path: &Path) -> Result<Vec<T>, CliError> {
    let rows = read_jsonl(open(stage, path)?).map_err(|e| io_err(stage, path, e))?;
    Ok(rows.into_iter().map(|(_, v)| v).collect())
}

/// The config key naming each external input, as used in error messages.
fn required<'a>(key: &str, v: &'a Option<PathBuf>) -> Result<&'a PathBuf, String> {
    v.as_ref().ok_or_else(|| format!("paths.{key}"))
}

impl Runner {
    pub fn new(cfg: PipelineConfig, out: PathBuf) -> Self {
        Self {
            cfg,
            out,
            force: false,
            overrides: Overrides::default(),
            log: Box::new(|line| eprintln!("{line}")),
        }
    }

    fn artifact(&self, rel: &str, producer: &'static str) -> Input {
        Input {
            name: rel.to_owned(),
            path: self.out.join(rel),
            producer: Some(producer),
        }
    }

    fn external(&self, stage: &'static str, key: &str, path: &Option<PathBuf>) -> Result<Input, CliError> {
        let path = required(key, path).map_err(|k| CliError::Validation(format!("{stage}: {k} is not configured")))?;
        Ok(Input {
            name: format!("paths.{key}"),
            path: path.clone(),
            producer: None,
        })
    }

    fn optional_external(&self, key: &str, path: &Option<PathBuf>) -> Option<Input> {
        path.as_ref().map(|p| Input {
            name: format!("paths.{key}"),
            path: p.clone(),
            producer: None,
        })
    }

    /// Runs `body` unless the manifest already records this exact stage
    /// result. `body` gets the stage key.
    fn execute(
        &mut self,
        plan: Plan,
        body: impl FnOnce(&Self, &str) -> Result<(), CliError>,
    ) -> Result<StageStatus, CliError> {
        let stage = plan.stage;
        let mut inputs = BTreeMap::new();
        for input in &plan.inputs {
            if !input.path.is_file() {
                return Err(match input.producer {
                    Some(producer) => CliError::MissingInput {
                        stage,
                        path: input.path.display().to_string(),
                        producer,
                    },
                    None => CliError::Validation(format!(
                        "{stage}: {} file {} does not exist",
                        input.name,
                        input.path.display()
                    )),
                });
            }
            let h = hash_file(&input.path).map_err(|e| io_err(stage, &input.path, e))?;
            inputs.insert(input.name.clone(), h);
        }
        let key = stage_key(stage, &plan.params, &inputs);
        std::fs::create_dir_all(&self.out).map_err(|e| io_err(stage, &self.out, e))?;
        let mut manifest = RunManifest::load(&self.out).map_err(|e| CliError::stage(stage, e))?;

        let up_to_date = !self.force
            && manifest.entry(stage).is_some_and(|e| {
                e.key == key
                    && plan.outputs.iter().all(|o| e.outputs.contains_key(*o))
                    && e.outputs
                        .iter()
                        .all(|(rel, h)| hash_file(&self.out.join(rel)).is_ok_and(|d| &d == h))
            });
        let (status, outputs) = if up_to_date {
            let prior = manifest.entry(stage).expect("checked above");
            (StageStatus::Skipped, prior.outputs.clone())
        } else {
            body(self, &key)?;
            let mut outputs = BTreeMap::new();
            for rel in &plan.outputs {
                let path = self.out.join(rel);
                let h = hash_file(&path).map_err(|e| io_err(stage, &path, e))?;
                outputs.insert((*rel).to_owned(), h);
            }
            (StageStatus::Ran, outputs)
        };
        manifest.upsert(
            StageEntry {
                stage: stage.to_owned(),
                status,
                key,
                params: plan.params,
                inputs,
                outputs,
                prev: String::new(),
                chain: String::new(),
            },
            &ORDER,
        );
        manifest.save(&self.out).map_err(|e| io_err(stage, &self.out, e))?;
        let verb = match status {
            StageStatus::Ran => "ran",
            StageStatus::Skipped => "skipped (inputs unchanged)",
        };
        (self.log)(&format!("{stage}: {verb}"));
        Ok(status)
    }

    pub fn run(&mut self, stage: &str) -> Result<StageStatus, CliError> {
        match stage {
            SAMPLE => self.sample(),
            WEIGHTS => self.weights(),
            SCORE => self.score(),
            CURATE => self.curate(),
            CLUES_INGEST => self.clues_ingest(),
            CLUES_FILTER => self.clues_filter(),
            EXPORT_STAGE1 => self.export_stage1(),
            EXPORT_STAGE2 => self.export_stage2(),
            INFER => self.infer(),
            EVAL => self.eval(),
            REPORT => self.report(),
            other => Err(CliError::Validation(format!("unknown stage {other:?}"))),
        }
    }

    pub fn sample(&mut self) -> Result<StageStatus, CliError> {
        let p = &self.cfg.params;
        let plan = Plan {
            stage: SAMPLE,
            params: json!({ "interval_m": p.interval_m, "seed": p.seed }),
            inputs: vec![self.external(SAMPLE, "roads", &self.cfg.paths.roads)?],
            outputs: vec![SAMPLES_CSV],
        };
        let roads = plan.inputs[0].path.clone();
        self.execute(plan, |r, _| {
            let network = read_road_network(&roads).map_err(|e| CliError::stage(SAMPLE, e))?;
            let seed = r.cfg.params.seed;
            let samples: Vec<_> = sample_points(&network, r.cfg.params.interval_m)
                .map_err(|e| CliError::stage(SAMPLE, e))?
                .into_iter()
                .map(|s| select_views(s, seed))
                .collect();
            let path = r.out.join(SAMPLES_CSV);
            let mut w = create(SAMPLE, &path)?;
            export_samples_csv(&samples, &mut w).map_err(|e| CliError::stage(SAMPLE, e))?;
            w.flush().map_err(|e| io_err(SAMPLE, &path, e))
        })
    }

    pub fn weights(&mut self) -> Result<StageStatus, CliError> {
        let p = &self.cfg.params;
        let plan = Plan {
            stage: WEIGHTS,
            params: json!({ "tau": p.tau, "label_schema_id": p.label_schema_id }),
            inputs: vec![self.external(WEIGHTS, "embeddings", &self.cfg.paths.embeddings)?],
            outputs: vec![WEIGHTS_JSON],
        };
        let src = plan.inputs[0].path.clone();
        self.execute(plan, |r, _| {
            let fail = |e| CliError::stage(WEIGHTS, e);
            let set = read_embeddings(open(WEIGHTS, &src)?).map_err(fail)?;
            let schema = set.label_schema(&r.cfg.params.label_schema_id).map_err(fail)?;
            let raw = build_similarity_matrix(&set.clue_vectors(), &set.label_vectors()).map_err(fail)?;
            let thresholded = threshold_zero(&minmax_normalize(&raw).map_err(fail)?, r.cfg.params.tau).map_err(fail)?;
            let corpus_id = hash_file(&src).map_err(|e| io_err(WEIGHTS, &src, e))?[..12].to_owned();
            let w = reduce_to_weights(&thresholded, &schema.id, &corpus_id).map_err(fail)?;
            let path = r.out.join(WEIGHTS_JSON);
            let mut out = create(WEIGHTS, &path)?;
            write_weights(&WeightsArtifact::new(&w, Some(schema.labels)), &mut out).map_err(fail)?;
            out.flush().map_err(|e| io_err(WEIGHTS, &path, e))
        })
    }

    pub fn score(&mut self) -> Result<StageStatus, CliError> {
        let plan = Plan {
            stage: SCORE,
            params: json!({}),
            inputs: vec![
                self.external(SCORE, "profiles", &self.cfg.paths.profiles)?,
                self.artifact(WEIGHTS_JSON, WEIGHTS),
            ],
            outputs: vec![SCORES_JSONL],
        };
        let profiles = plan.inputs[0].path.clone();
        self.execute(plan, |r, _| {
            let fail = |e| CliError::stage(SCORE, e);
            let profiles = read_profiles(open(SCORE, &profiles)?).map_err(fail)?;
            let weights = read_weights(open(SCORE, &r.out.join(WEIGHTS_JSON))?)
                .map_err(fail)?
                .into_weights();
            let scores = profiles
                .iter()
                .map(|p| locatability_score(p, &weights))
                .collect::<Result<Vec<_>, _>>()
                .map_err(fail)?;
            let path = r.out.join(SCORES_JSONL);
            let mut w = create(SCORE, &path)?;
            write_scores(&scores, &mut w).map_err(fail)?;
            w.flush().map_err(|e| io_err(SCORE, &path, e))
        })
    }

    pub fn curate(&mut self) -> Result<StageStatus, CliError> {
        let p = &self.cfg.params;
        let plan = Plan {
            stage: CURATE,
            params: json!({
                "locatability_threshold": p.locatability_threshold,
                "curve_label": p.curve_label,
                "curve_bin_width": p.curve_bin_width,
            }),
            inputs: vec![
                self.artifact(SCORES_JSONL, SCORE),
                self.artifact(WEIGHTS_JSON, WEIGHTS),
                self.external(CURATE, "profiles", &self.cfg.paths.profiles)?,
            ],
            outputs: vec![CURATED_TXT, PARTITION_JSON, CURVE_CSV],
        };
        let profiles = plan.inputs[2].path.clone();
        self.execute(plan, |r, _| {
            let fail = |e| CliError::stage(CURATE, e);
            let scores = read_scores(open(CURATE, &r.out.join(SCORES_JSONL))?).map_err(fail)?;
            let partition = partition_scores(scores.clone(), r.cfg.params.locatability_threshold).map_err(fail)?;
            let mut ids = partition.high_ids().join("\n");
            if !ids.is_empty() {
                ids.push('\n');
            }
            write_text(CURATE, &r.out.join(CURATED_TXT), &ids)?;
            let mut doc = serde_json::to_string_pretty(&partition).map_err(|e| CliError::stage(CURATE, e))?;
            doc.push('\n');
            write_text(CURATE, &r.out.join(PARTITION_JSON), &doc)?;

            let artifact = read_weights(open(CURATE, &r.out.join(WEIGHTS_JSON))?).map_err(fail)?;
            let labels = artifact
                .labels
                .clone()
                .ok_or_else(|| CliError::stage(CURATE, "weights artifact carries no label names"))?;
            let schema = LabelSchema::new(artifact.label_schema_id.clone(), labels).map_err(fail)?;
            let label = r
                .cfg
                .params
                .curve_label
                .clone()
                .unwrap_or_else(|| schema.labels[0].clone());
            let profiles = read_profiles(open(CURATE, &profiles)?).map_err(fail)?;
            let by_id: HashMap<&str, &LocatabilityScore> = scores.iter().map(|s| (s.image_id.as_str(), s)).collect();
            let entries: Vec<(SegmentationProfile, LocatabilityScore)> = profiles
                .iter()
                .filter_map(|p| by_id.get(p.image_id.as_str()).map(|s| (p.clone(), (*s).clone())))
                .collect();
            let bins = class_proportion_curve(&schema, &entries, &label, r.cfg.params.curve_bin_width).map_err(fail)?;
            write_text(CURATE, &r.out.join(CURVE_CSV), &geocurate_core::eval::curve_csv(&bins))
        })
    }

    pub fn clues_ingest(&mut self) -> Result<StageStatus, CliError> {
        let input = match &self.overrides.clues_input {
            Some(p) => Input {
                name: "paths.clues".into(),
                path: p.clone(),
                producer: None,
            },
            None => self.external(CLUES_INGEST, "clues", &self.cfg.paths.clues)?,
        };
        let plan = Plan {
            stage: CLUES_INGEST,
            params: json!({}),
            inputs: vec![input],
            outputs: vec![INGESTED_JSONL, REJECTIONS_JSONL],
        };
        let src = plan.inputs[0].path.clone();
        self.execute(plan, |r, _| {
            let report = ingest_clues(open(CLUES_INGEST, &src)?).map_err(|e| CliError::stage(CLUES_INGEST, e))?;
            write_lines(CLUES_INGEST, &r.out.join(INGESTED_JSONL), &report.records)?;
            write_lines(CLUES_INGEST, &r.out.join(REJECTIONS_JSONL), &report.rejections)
        })
    }

    fn tagger(&self) -> Result<AnyTagger, CliError> {
        match &self.cfg.params.tagger {
            TaggerSpec::Gazetteer => Ok(AnyTagger::Gazetteer(GazetteerTagger::from_gazetteer(
                &self.gazetteer(CLUES_FILTER)?,
            ))),
            TaggerSpec::Endpoint(url) => {
                let t = EndpointTagger::new(url.clone(), std::time::Duration::from_secs(30)).map_err(|e| {
                    CliError::Endpoint {
                        stage: CLUES_FILTER,
                        message: e.to_string(),
                    }
                })?;
                Ok(AnyTagger::Endpoint(t))
            }
        }
    }

    fn gazetteer(&self, stage: &'static str) -> Result<Gazetteer, CliError> {
        let fail = |e| CliError::stage(stage, e);
        let normalizer = match &self.cfg.paths.aliases {
            Some(p) => NameNormalizer::from_csv(open(stage, p)?).map_err(fail)?,
            None => NameNormalizer::builtin().clone(),
        };
        match &self.cfg.paths.gazetteer {
            Some(p) => Gazetteer::from_csv(open(stage, p)?, normalizer).map_err(fail),
            None if self.cfg.paths.aliases.is_none() => Ok(Gazetteer::builtin().clone()),
            None => Gazetteer::new(Gazetteer::builtin().entries().to_vec(), normalizer).map_err(fail),
        }
    }

    fn gazetteer_inputs(&self) -> Vec<Input> {
        [
            self.optional_external("gazetteer", &self.cfg.paths.gazetteer),
            self.optional_external("aliases", &self.cfg.paths.aliases),
        ]
        .into_iter()
        .flatten()
        .collect()
    }

    pub fn clues_filter(&mut self) -> Result<StageStatus, CliError> {
        let p = &self.cfg.params;
        let mut inputs = vec![self.artifact(INGESTED_JSONL, CLUES_INGEST)];
        if p.tagger == TaggerSpec::Gazetteer {
            inputs.extend(self.gazetteer_inputs());
        }
        let plan = Plan {
            stage: CLUES_FILTER,
            params: json!({ "tagger": p.tagger.as_string(), "retries": p.tagger_retries }),
            inputs,
            outputs: vec![KEPT_JSONL, DROPPED_JSONL],
        };
        self.execute(plan, |r, _| {
            let records: Vec<ClueRecord> = read_lines(CLUES_FILTER, &r.out.join(INGESTED_JSONL))?;
            let tagger = r.tagger()?;
            let outcome = filter_geo_entities(records, &tagger, r.cfg.params.tagger_retries);
            write_lines(CLUES_FILTER, &r.out.join(KEPT_JSONL), &outcome.kept)?;
            write_lines(CLUES_FILTER, &r.out.join(DROPPED_JSONL), &outcome.dropped)
        })
    }

    fn write_export(
        &self,
        stage: &'static str,
        outcome: &ExportOutcome,
        main: &str,
        skipped: &str,
    ) -> Result<(), CliError> {
        write_lines(stage, &self.out.join(main), &outcome.examples)?;
        write_lines(stage, &self.out.join(skipped), &outcome.skipped)
    }

    pub fn export_stage1(&mut self) -> Result<StageStatus, CliError> {
        let plan = Plan {
            stage: EXPORT_STAGE1,
            params: json!({}),
            inputs: vec![self.artifact(KEPT_JSONL, CLUES_FILTER)],
            outputs: vec![STAGE1_JSONL, STAGE1_SKIPPED],
        };
        self.execute(plan, |r, _| {
            let records: Vec<ClueRecord> = read_lines(EXPORT_STAGE1, &r.out.join(KEPT_JSONL))?;
            r.write_export(
                EXPORT_STAGE1,
                &export_reasoning_corpus(&records),
                STAGE1_JSONL,
                STAGE1_SKIPPED,
            )
        })
    }

    pub fn export_stage2(&mut self) -> Result<StageStatus, CliError> {
        let plan = Plan {
            stage: EXPORT_STAGE2,
            params: json!({}),
            inputs: vec![
                self.artifact(CURATED_TXT, CURATE),
                self.external(EXPORT_STAGE2, "geotags", &self.cfg.paths.geotags)?,
            ],
            outputs: vec![STAGE2_JSONL, STAGE2_SKIPPED],
        };
        let geotags = plan.inputs[1].path.clone();
        self.execute(plan, |r, _| {
            let curated_path = r.out.join(CURATED_TXT);
            let curated =
                std::fs::read_to_string(&curated_path).map_err(|e| io_err(EXPORT_STAGE2, &curated_path, e))?;
            let ids: Vec<&str> = curated.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
            let tags = read_geotags(open(EXPORT_STAGE2, &geotags)?).map_err(|e| CliError::stage(EXPORT_STAGE2, e))?;
            let joined = join_curated(&ids, &tags);
            r.write_export(
                EXPORT_STAGE2,
                &export_location_corpus(&joined),
                STAGE2_JSONL,
                STAGE2_SKIPPED,
            )
        })
    }

    pub fn infer(&mut self) -> Result<StageStatus, CliError> {
        let name = self
            .cfg
            .infer_endpoint
            .clone()
            .ok_or_else(|| CliError::Validation("infer: no endpoint configured ([infer] endpoint)".into()))?;
        let endpoint = self
            .cfg
            .endpoints
            .get(&name)
            .cloned()
            .ok_or_else(|| CliError::Validation(format!("infer: no [endpoint.{name}] section")))?;
        let plan = Plan {
            stage: INFER,
            // The URL is left out on purpose: the same model behind a
            // different host should not invalidate finished predictions.
            params: json!({
                "endpoint": name,
                "model": endpoint.model,
                "prompt_sha256": sha256_hex(GEOLOC_PROMPT.as_bytes()),
            }),
            inputs: vec![self.external(INFER, "images", &self.cfg.paths.images)?],
            outputs: vec![PREDICTIONS_JSONL],
        };
        let images = plan.inputs[0].path.clone();
        self.execute(plan, |r, key| {
            let manifest = read_manifest(&images).map_err(|e| CliError::Validation(format!("infer: {e}")))?;
            let checkpoint = r
                .overrides
                .infer_checkpoint
                .clone()
                .unwrap_or_else(|| r.out.join("checkpoints").join(format!("infer-{}.jsonl", &key[..12])));
            let options = BatchOptions {
                limit: r.overrides.infer_limit,
                retry_transport: r.overrides.retry_failed,
                ..BatchOptions::default()
            };
            let gateway = Gateway::new(endpoint).map_err(|e| CliError::Validation(format!("infer: {e}")))?;
            let runtime = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .map_err(|e| CliError::stage(INFER, e))?;
            let outcome = runtime
                .block_on(batch_infer(&gateway, &manifest, &checkpoint, &options))
                .map_err(|e| match e {
                    GatewayError::Checkpoint { .. } | GatewayError::Io(_) => CliError::stage(INFER, e),
                    GatewayError::Manifest(_) | GatewayError::Config(_) => CliError::Validation(format!("infer: {e}")),
                    other => CliError::Endpoint {
                        stage: INFER,
                        message: other.to_string(),
                    },
                })?;
            if outcome.issued > 0 && outcome.transport_failures == outcome.issued {
                return Err(CliError::Endpoint {
                    stage: INFER,
                    message: format!(
                        "all {} requests failed; failures are checkpointed in {}, rerun with --retry-failed once the endpoint is back",
                        outcome.issued,
                        checkpoint.display()
                    ),
                });
            }
            if !outcome.complete {
                return Err(CliError::stage(
                    INFER,
                    format!(
                        "stopped after {} new requests; {} of {} images done; rerun to resume from {}",
                        outcome.issued,
                        outcome.records.len(),
                        manifest.len(),
                        checkpoint.display()
                    ),
                ));
            }
            let records: Vec<PredictionRecord> = outcome
                .records
                .into_iter()
                .map(|rec| PredictionRecord { latency_ms: None, ..rec })
                .collect();
            write_lines(INFER, &r.out.join(PREDICTIONS_JSONL), &records)
        })
    }

    pub fn eval(&mut self) -> Result<StageStatus, CliError> {
        let preds = match &self.overrides.predictions {
            Some(p) => Input {
                name: "predictions".into(),
                path: p.clone(),
                producer: None,
            },
            None => self.artifact(PREDICTIONS_JSONL, INFER),
        };
        let mut inputs = vec![preds, self.external(EVAL, "truth", &self.cfg.paths.truth)?];
        inputs.extend(self.gazetteer_inputs());
        let plan = Plan {
            stage: EVAL,
            params: json!({ "thresholds_km": self.cfg.params.thresholds_km }),
            inputs,
            outputs: vec![REPORT_JSON],
        };
        let (preds, truth) = (plan.inputs[0].path.clone(), plan.inputs[1].path.clone());
        self.execute(plan, |r, _| {
            let fail = |e| CliError::stage(EVAL, e);
            let preds: Vec<PredictionRecord> = read_lines(EVAL, &preds)?;
            let truth = read_truth(open(EVAL, &truth)?).map_err(fail)?;
            let g = r.gazetteer(EVAL)?;
            let report = evaluate(&preds, &truth, &g, &r.cfg.params.thresholds_km).map_err(fail)?;
            if !report.counts.is_conserved() {
                return Err(CliError::stage(EVAL, "answer counts do not add up to the total"));
            }
            write_text(EVAL, &r.out.join(REPORT_JSON), &report.to_json())
        })
    }

    pub fn report(&mut self) -> Result<StageStatus, CliError> {
        let plan = Plan {
            stage: REPORT,
            params: json!({}),
            inputs: vec![self.artifact(REPORT_JSON, EVAL)],
            outputs: vec![REPORT_TXT, REPORT_CSV],
        };
        self.execute(plan, |r, _| {
            let report = load_report(&r.out.join(REPORT_JSON))?;
            write_text(REPORT, &r.out.join(REPORT_TXT), &report.render_text())?;
            write_text(REPORT, &r.out.join(REPORT_CSV), &report.render_csv())
        })
    }

    /// Every config key `run-all` needs that is unset or points at a
    /// missing file.
    pub fn missing_for_run_all(cfg: &PipelineConfig) -> Vec<String> {
        let p = &cfg.paths;
        let mut missing = Vec::new();
        for (key, v) in [
            ("roads", &p.roads),
            ("embeddings", &p.embeddings),
            ("profiles", &p.profiles),
            ("clues", &p.clues),
            ("geotags", &p.geotags),
            ("images", &p.images),
            ("truth", &p.truth),
        ] {
            match v {
                None => missing.push(format!("paths.{key} (not set)")),
                Some(path) if !path.is_file() => missing.push(format!("paths.{key} ({} not found)", path.display())),
                Some(_) => {}
            }
        }
        for (key, v) in [("gazetteer", &p.gazetteer), ("aliases", &p.aliases)] {
            if let Some(path) = v.as_ref().filter(|p| !p.is_file()) {
                missing.push(format!("paths.{key} ({} not found)", path.display()));
            }
        }
        if cfg.out.is_none() {
            missing.push("paths.out (not set; or pass --out)".into());
        }
        if cfg.infer_endpoint.is_none() {
            missing.push("infer.endpoint (not set)".into());
        }
        missing
    }

    /// Runs the whole DAG in order, stopping at the first failing stage.
    pub fn run_all(&mut self) -> Result<EvalReport, CliError> {
        let missing = Self::missing_for_run_all(&self.cfg);
        if !missing.is_empty() {
            return Err(CliError::Validation(format!(
                "run-all needs these config entries:\n  {}",
                missing.join("\n  ")
            )));
        }
        for stage in ORDER {
            self.run(stage)?;
        }
        load_report(&self.out.join(REPORT_JSON))
    }
}

enum AnyTagger {
    Gazetteer(GazetteerTagger),
    Endpoint(EndpointTagger),
}

impl Tagger for AnyTagger {
    fn tag(&self, text: &str) -> Result<Vec<String>, geocurate_core::clues::TaggerError> {
        match self {
            AnyTagger::Gazetteer(t) => t.tag(text),
            AnyTagger::Endpoint(t) => t.tag(text),
        }
    }
}

pub fn load_report(path: &Path) -> Result<EvalReport, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(REPORT, path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(REPORT, path, e))
}
