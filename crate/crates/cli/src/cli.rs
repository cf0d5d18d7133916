use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use geocurate_core::clues::ingest_clues;
use geocurate_core::eval::{ablation_report, AblationRun};
use geocurate_core::locatability::EmbeddingKind;
use geocurate_gateway::mock::{serve, MockFixture, Stats};
use geocurate_gateway::{fetch_embeddings, EmbedItem, Gateway};

use crate::config::{parse_thresholds, PipelineConfig, TaggerSpec};
use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::stages::{self, load_report, Runner};

#[derive(Debug, Parser)]
#[command(
    name = "geocurate",
    version,
    about = "Curate street-view geo-localization data and evaluate models on it"
)]
pub struct Cli {
    /// INI config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides paths.out).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for every random choice (overrides params.seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Re-run stages even when their inputs are unchanged.
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample street-view capture points along the road network.
    Sample {
        #[arg(long)]
        roads: Option<PathBuf>,
        #[arg(long)]
        interval_m: Option<f64>,
    },
    /// Derive per-label locatability weights from clue and label embeddings.
    Weights {
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        tau: Option<f64>,
        /// Label schema id the weights are tied to.
        #[arg(long)]
        schema_id: Option<String>,
    },
    /// Score every segmentation profile.
    Score {
        #[arg(long)]
        profiles: Option<PathBuf>,
    },
    /// Split scored images at the locatability threshold.
    Curate {
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Clue corpus steps.
    Clues {
        #[command(subcommand)]
        step: CluesStep,
    },
    /// Export both tuning corpora.
    ExportTrain,
    /// Query the vision-language endpoint for every image in the manifest.
    Infer(InferArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
    /// Render the evaluation report, or an ablation table with --run.
    Report {
        /// `NAME=report.json`, repeatable.
        #[arg(long = "run", value_name = "NAME=PATH")]
        runs: Vec<String>,
    },
    /// Run every stage in order, skipping those whose inputs are unchanged.
    RunAll,
    /// Fetch clue and label embeddings from an embeddings endpoint.
    Embed {
        /// Clue JSONL.
        #[arg(long)]
        input: PathBuf,
        /// Comma-separated label names, in schema order.
        #[arg(long)]
        labels: String,
        #[arg(long)]
        endpoint: String,
        #[arg(long)]
        output: PathBuf,
    },
    /// Serve the scriptable mock endpoint.
    MockServer {
        #[arg(long)]
        fixture: PathBuf,
        #[arg(long, default_value_t = 0)]
        port: u16,
    },
    /// Check the run manifest's hash chain against the files on disk.
    Verify,
}

#[derive(Debug, Subcommand)]
pub enum CluesStep {
    /// Load clue JSONL, itemising rejected lines.
    Ingest {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Keep clues that mention a place.
    Filter {
        /// `gazetteer` or `endpoint:<url>`.
        #[arg(long)]
        tagger: Option<String>,
        #[arg(long)]
        retries: Option<usize>,
    },
    /// Reasoning corpus (country and reasons).
    ExportStage1,
    /// Location corpus (country and city) from curated images.
    ExportStage2 {
        #[arg(long)]
        geotags: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct InferArgs {
    /// Image manifest, CSV (`image_id,image_ref`) or JSONL.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Endpoint section name from the config.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Stop after this many new requests; rerun to resume.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Retry images whose checkpointed request failed at the transport level.
    #[arg(long)]
    pub retry_failed: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub preds: Option<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Gazetteer CSV (`city,country,lat,lon,population,aliases`).
    #[arg(long)]
    pub gazetteer: Option<PathBuf>,
    #[arg(long)]
    pub aliases: Option<PathBuf>,
    /// Comma-separated distance thresholds in km.
    #[arg(long)]
    pub thresholds: Option<String>,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    if let Some(seed) = cli.seed {
        cfg.params.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(cfg: &PipelineConfig) -> Result<PathBuf, CliError> {
    cfg.out
        .clone()
        .ok_or_else(|| CliError::Validation("no output directory: set paths.out or pass --out".into()))
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Validation(format!("cannot start async runtime: {e}")))
}

/// Applies verb flags to the config, then runs the verb.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = load_config(&cli)?;
    let mut overrides = stages::Overrides::default();
    let mut stage_list: Vec<&str> = Vec::new();

    match cli.command {
        Command::Sample { roads, interval_m } => {
            cfg.paths.roads = roads.or(cfg.paths.roads);
            if let Some(v) = interval_m {
                cfg.params.interval_m = v;
            }
            stage_list.push(stages::SAMPLE);
        }
        Command::Weights {
            embeddings,
            tau,
            schema_id,
        } => {
            cfg.paths.embeddings = embeddings.or(cfg.paths.embeddings);
            if let Some(v) = tau {
                cfg.params.tau = v;
            }
            if let Some(v) = schema_id {
                cfg.params.label_schema_id = v;
            }
            stage_list.push(stages::WEIGHTS);
        }
        Command::Score { profiles } => {
            cfg.paths.profiles = profiles.or(cfg.paths.profiles);
            stage_list.push(stages::SCORE);
        }
        Command::Curate { threshold } => {
            if let Some(v) = threshold {
                cfg.params.locatability_threshold = v;
            }
            stage_list.push(stages::CURATE);
        }
        Command::Clues { step } => match step {
            CluesStep::Ingest { input } => {
                overrides.clues_input = input;
                stage_list.push(stages::CLUES_INGEST);
            }
            CluesStep::Filter { tagger, retries } => {
                if let Some(t) = tagger {
                    cfg.params.tagger = TaggerSpec::parse(&t)?;
                }
                if let Some(r) = retries {
                    cfg.params.tagger_retries = r;
                }
                stage_list.push(stages::CLUES_FILTER);
            }
            CluesStep::ExportStage1 => stage_list.push(stages::EXPORT_STAGE1),
            CluesStep::ExportStage2 { geotags } => {
                cfg.paths.geotags = geotags.or(cfg.paths.geotags);
                stage_list.push(stages::EXPORT_STAGE2);
            }
        },
        Command::ExportTrain => stage_list.extend([stages::EXPORT_STAGE1, stages::EXPORT_STAGE2]),
        Command::Infer(args) => {
            cfg.paths.images = args.manifest.or(cfg.paths.images);
            cfg.infer_endpoint = args.endpoint.or(cfg.infer_endpoint);
            overrides.infer_checkpoint = args.checkpoint;
            overrides.infer_limit = args.limit;
            overrides.retry_failed = args.retry_failed;
            stage_list.push(stages::INFER);
        }
        Command::Eval(args) => {
            overrides.predictions = args.preds;
            cfg.paths.truth = args.truth.or(cfg.paths.truth);
            cfg.paths.gazetteer = args.gazetteer.or(cfg.paths.gazetteer);
            cfg.paths.aliases = args.aliases.or(cfg.paths.aliases);
            if let Some(t) = args.thresholds {
                cfg.params.thresholds_km = parse_thresholds(&t).map_err(CliError::Validation)?;
            }
            stage_list.push(stages::EVAL);
        }
        Command::Report { runs } if !runs.is_empty() => return ablation(&cfg, &runs),
        Command::Report { .. } => stage_list.push(stages::REPORT),
        Command::RunAll => {
            let out = cfg.out.clone().unwrap_or_default();
            let mut runner = Runner::new(cfg, out);
            runner.force = cli.force;
            let report = runner.run_all()?;
            print!("{}", report.render_text());
            return Ok(());
        }
        Command::Embed {
            input,
            labels,
            endpoint,
            output,
        } => return embed(&cfg, &input, &labels, &endpoint, &output),
        Command::MockServer { fixture, port } => return mock_server(&fixture, port),
        Command::Verify => return verify(&cfg),
    }

    let out = out_dir(&cfg)?;
    let mut runner = Runner::new(cfg, out.clone());
    runner.force = cli.force;
    runner.overrides = overrides;
    for stage in &stage_list {
        runner.run(stage)?;
    }
    if let Some(&last) = stage_list.last() {
        if last == stages::EVAL {
            print!("{}", load_report(&out.join(stages::REPORT_JSON))?.render_text());
        } else if last == stages::REPORT {
            let text = std::fs::read_to_string(out.join(stages::REPORT_TXT))
                .map_err(|e| CliError::stage(stages::REPORT, e))?;
            print!("{text}");
        }
    }
    Ok(())
}

fn ablation(cfg: &PipelineConfig, runs: &[String]) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for spec in runs {
        let (name, path) = spec
            .split_once('=')
            .ok_or_else(|| CliError::Validation(format!("--run expects NAME=PATH, got {spec:?}")))?;
        let report = load_report(&PathBuf::from(path))?;
        rows.push(AblationRun::from_report(name, &report));
    }
    let table = ablation_report(rows).map_err(|e| CliError::stage(stages::REPORT, e))?;
    if let Some(out) = &cfg.out {
        std::fs::create_dir_all(out).map_err(|e| CliError::stage(stages::REPORT, e))?;
        std::fs::write(out.join("ablation.txt"), table.render_text())
            .map_err(|e| CliError::stage(stages::REPORT, e))?;
        std::fs::write(out.join("ablation.csv"), table.render_csv()).map_err(|e| CliError::stage(stages::REPORT, e))?;
    }
    print!("{}", table.render_text());
    Ok(())
}

fn embed(cfg: &PipelineConfig, input: &Path, labels: &str, endpoint: &str, output: &Path) -> Result<(), CliError> {
    const STAGE: &str = "embed";
    let ep = cfg
        .endpoints
        .get(endpoint)
        .cloned()
        .ok_or_else(|| CliError::Validation(format!("embed: no [endpoint.{endpoint}] section")))?;
    let file =
        std::fs::File::open(input).map_err(|e| CliError::Validation(format!("embed: {}: {e}", input.display())))?;
    let report = ingest_clues(std::io::BufReader::new(file)).map_err(|e| CliError::stage(STAGE, e))?;
    let mut items: Vec<EmbedItem> = report
        .records
        .into_iter()
        .map(|r| EmbedItem {
            id: r.id,
            kind: EmbeddingKind::Clue,
            text: r.text,
        })
        .collect();
    for label in labels.split(',').map(str::trim).filter(|l| !l.is_empty()) {
        items.push(EmbedItem {
            id: label.to_owned(),
            kind: EmbeddingKind::Label,
            text: label.to_owned(),
        });
    }
    let gateway = Gateway::new(ep).map_err(|e| CliError::Validation(format!("embed: {e}")))?;
    let records = runtime()?
        .block_on(fetch_embeddings(&gateway, &items))
        .map_err(|e| CliError::Endpoint {
            stage: STAGE,
            message: e.to_string(),
        })?;
    let mut buf = Vec::new();
    geocurate_core::jsonl::write_jsonl(&records, &mut buf).map_err(|e| CliError::stage(STAGE, e))?;
    std::fs::write(output, buf).map_err(|e| CliError::stage(STAGE, format!("{}: {e}", output.display())))?;
    eprintln!("embed: wrote {} vectors to {}", records.len(), output.display());
    Ok(())
}

fn mock_server(fixture: &Path, port: u16) -> Result<(), CliError> {
    let fixture = MockFixture::from_path(fixture).map_err(|e| CliError::Validation(e.to_string()))?;
    runtime()?.block_on(async move {
        let listener = tokio::net::TcpListener::bind(("127.0.0.1", port))
            .await
            .map_err(|e| CliError::stage("mock-server", e))?;
        let addr = listener.local_addr().map_err(|e| CliError::stage("mock-server", e))?;
        println!("mock server listening on http://{addr}");
        let _ = std::io::stdout().flush();
        serve(
            listener,
            fixture,
            std::sync::Arc::new(Stats::default()),
            std::future::pending(),
        )
        .await
        .map_err(|e| CliError::stage("mock-server", e))
    })
}

fn verify(cfg: &PipelineConfig) -> Result<(), CliError> {
    let out = out_dir(cfg)?;
    let manifest = RunManifest::load(&out).map_err(|e| CliError::stage("verify", e))?;
    if manifest.stages.is_empty() {
        return Err(CliError::stage(
            "verify",
            format!("no run manifest in {}", out.display()),
        ));
    }
    let problems = manifest.verify(&out);
    if problems.is_empty() {
        println!("{} stages verified", manifest.stages.len());
        Ok(())
    } else {
        Err(CliError::stage("verify", problems.join("\n  ")))
    }
}
