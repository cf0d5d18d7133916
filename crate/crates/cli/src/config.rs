//! Pipeline configuration: an INI file with `${VAR}` environment
//! interpolation.
//!
//! ```ini
//! [paths]
//! roads = data/roads.geojson
//! out = out
//!
//! [params]
//! seed = 7
//!
//! [endpoint.vlm]
//! base_url = ${VLM_URL}
//! model = qwen-vl-chat
//! token_env = VLM_TOKEN
//!
//! [infer]
//! endpoint = vlm
//! ```
//!
//! Relative paths are resolved against the config file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use geocurate_gateway::EndpointConfig;
use ini::Ini;

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Paths {
    pub roads: Option<PathBuf>,
    pub profiles: Option<PathBuf>,
    pub clues: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub geotags: Option<PathBuf>,
    /// Evaluation image manifest (CSV or JSONL).
    pub images: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    /// Optional; the built-in gazetteer is used when unset.
    pub gazetteer: Option<PathBuf>,
    /// Optional alias table; the built-in one is used when unset.
    pub aliases: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TaggerSpec {
    Gazetteer,
    Endpoint(String),
}

impl TaggerSpec {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s.trim() {
            "gazetteer" => Ok(TaggerSpec::Gazetteer),
            other => match other.strip_prefix("endpoint:") {
                Some(url) if !url.is_empty() => Ok(TaggerSpec::Endpoint(url.to_owned())),
                _ => Err(CliError::Validation(format!(
                    "tagger must be `gazetteer` or `endpoint:<url>`, got {other:?}"
                ))),
            },
        }
    }

    pub fn as_string(&self) -> String {
        match self {
            TaggerSpec::Gazetteer => "gazetteer".into(),
            TaggerSpec::Endpoint(url) => format!("endpoint:{url}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub interval_m: f64,
    pub tau: f64,
    pub locatability_threshold: f64,
    pub thresholds_km: Vec<f64>,
    pub seed: u64,
    pub label_schema_id: String,
    pub tagger: TaggerSpec,
    pub tagger_retries: usize,
    /// Label whose area ratio drives the proportion curve; defaults to the
    /// first label.
    pub curve_label: Option<String>,
    pub curve_bin_width: f64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            interval_m: 4000.0,
            tau: 0.5,
            locatability_threshold: 0.4,
            thresholds_km: vec![1.0, 25.0, 750.0],
            seed: 0,
            label_schema_id: "default".into(),
            tagger: TaggerSpec::Gazetteer,
            tagger_retries: 2,
            curve_label: None,
            curve_bin_width: 0.05,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub out: Option<PathBuf>,
    pub params: Params,
    pub endpoints: BTreeMap<String, EndpointConfig>,
    /// Endpoint used by `infer`.
    pub infer_endpoint: Option<String>,
}

/// Replaces `${NAME}` with the value of environment variable `NAME`.
pub fn interpolate(value: &str, lookup: &dyn Fn(&str) -> Option<String>) -> Result<String, String> {
    let mut out = String::with_capacity(value.len());
    let mut rest = value;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after
            .find('}')
            .ok_or_else(|| format!("unterminated ${{ in {value:?}"))?;
        let name = &after[..end];
        if name.is_empty() {
            return Err(format!("empty variable name in {value:?}"));
        }
        let v = lookup(name).ok_or_else(|| format!("environment variable {name} is not set"))?;
        out.push_str(&v);
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn env_lookup(name: &str) -> Option<String> {
    std::env::var(name).ok()
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.trim().parse().map_err(|_| format!("{key}: cannot parse {v:?}"))
}

pub fn parse_thresholds(v: &str) -> Result<Vec<f64>, String> {
    let out = v
        .split(',')
        .map(|s| parse_num::<f64>("thresholds_km", s))
        .collect::<Result<Vec<_>, _>>()?;
    if out.is_empty() || out.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(format!("thresholds_km must be positive numbers, got {v:?}"));
    }
    Ok(out)
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self::parse(&text, &base, &env_lookup)
    }

    /// Parses config text. Every problem found is reported, not just the
    /// first.
    pub fn parse(text: &str, base: &Path, lookup: &dyn Fn(&str) -> Option<String>) -> Result<Self, CliError> {
        let ini = Ini::load_from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        let mut cfg = PipelineConfig::default();
        let mut problems = Vec::new();

        for (section, props) in ini.iter() {
            let section = section.unwrap_or("");
            let mut endpoint: Option<(String, BTreeMap<String, String>)> = section
                .strip_prefix("endpoint.")
                .map(|name| (name.to_owned(), BTreeMap::new()));
            for (key, raw) in props.iter() {
                let value = match interpolate(raw, lookup) {
                    Ok(v) => v,
                    Err(e) => {
                        problems.push(format!("[{section}] {key}: {e}"));
                        continue;
                    }
                };
                let path = || Some(resolve(base, &value));
                let result: Result<(), String> = match (section, key) {
                    ("paths", "roads") => {
                        cfg.paths.roads = path();
                        Ok(())
                    }
                    ("paths", "profiles") => {
                        cfg.paths.profiles = path();
                        Ok(())
                    }
                    ("paths", "clues") => {
                        cfg.paths.clues = path();
                        Ok(())
                    }
                    ("paths", "embeddings") => {
                        cfg.paths.embeddings = path();
                        Ok(())
                    }
                    ("paths", "geotags") => {
                        cfg.paths.geotags = path();
                        Ok(())
                    }
                    ("paths", "images") => {
                        cfg.paths.images = path();
                        Ok(())
                    }
                    ("paths", "truth") => {
                        cfg.paths.truth = path();
                        Ok(())
                    }
                    ("paths", "gazetteer") => {
                        cfg.paths.gazetteer = path();
                        Ok(())
                    }
                    ("paths", "aliases") => {
                        cfg.paths.aliases = path();
                        Ok(())
                    }
                    ("paths", "out") => {
                        cfg.out = path();
                        Ok(())
                    }
                    ("params", "interval_m") => parse_num(key, &value).map(|v| cfg.params.interval_m = v),
                    ("params", "tau") => parse_num(key, &value).map(|v| cfg.params.tau = v),
                    ("params", "locatability_threshold") => {
                        parse_num(key, &value).map(|v| cfg.params.locatability_threshold = v)
                    }
                    ("params", "thresholds_km") => parse_thresholds(&value).map(|v| cfg.params.thresholds_km = v),
                    ("params", "seed") => parse_num(key, &value).map(|v| cfg.params.seed = v),
                    ("params", "label_schema_id") => {
                        cfg.params.label_schema_id = value.clone();
                        Ok(())
                    }
                    ("params", "tagger") => TaggerSpec::parse(&value)
                        .map(|t| cfg.params.tagger = t)
                        .map_err(|e| e.to_string()),
                    ("params", "tagger_retries") => parse_num(key, &value).map(|v| cfg.params.tagger_retries = v),
                    ("params", "curve_label") => {
                        cfg.params.curve_label = Some(value.clone());
                        Ok(())
                    }
                    ("params", "curve_bin_width") => parse_num(key, &value).map(|v| cfg.params.curve_bin_width = v),
                    ("infer", "endpoint") => {
                        cfg.infer_endpoint = Some(value.clone());
                        Ok(())
                    }
                    _ => match endpoint.as_mut() {
                        Some((_, fields)) => {
                            fields.insert(key.to_owned(), value.clone());
                            Ok(())
                        }
                        None => Err("unknown key".into()),
                    },
                };
                if let Err(e) = result {
                    problems.push(format!("[{section}] {key}: {e}"));
                }
            }
            if let Some((name, fields)) = endpoint {
                match endpoint_from_fields(&name, &fields) {
                    Ok(ep) => {
                        cfg.endpoints.insert(name, ep);
                    }
                    Err(e) => problems.push(format!("[{section}] {e}")),
                }
            }
        }
        if let Some(name) = &cfg.infer_endpoint {
            if !cfg.endpoints.contains_key(name) {
                problems.push(format!("[infer] endpoint: no [endpoint.{name}] section"));
            }
        }
        if let Err(e) = cfg.params.validate() {
            problems.push(e);
        }
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(CliError::Validation(format!(
                "invalid config:\n  {}",
                problems.join("\n  ")
            )))
        }
    }
}

fn resolve(base: &Path, value: &str) -> PathBuf {
    let p = Path::new(value.trim());
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl Params {
    pub fn validate(&self) -> Result<(), String> {
        let mut bad = Vec::new();
        if !(self.interval_m.is_finite() && self.interval_m > 0.0) {
            bad.push(format!("interval_m must be positive, got {}", self.interval_m));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            bad.push(format!("tau must be in [0, 1], got {}", self.tau));
        }
        if !(0.0..=1.0).contains(&self.locatability_threshold) {
            bad.push(format!(
                "locatability_threshold must be in [0, 1], got {}",
                self.locatability_threshold
            ));
        }
        if !(self.curve_bin_width > 0.0 && self.curve_bin_width <= 1.0) {
            bad.push(format!(
                "curve_bin_width must be in (0, 1], got {}",
                self.curve_bin_width
            ));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(format!("[params] {}", bad.join("; ")))
        }
    }
}

fn endpoint_from_fields(name: &str, fields: &BTreeMap<String, String>) -> Result<EndpointConfig, String> {
    let base_url = fields.get("base_url").ok_or("missing base_url")?;
    let model = fields.get("model").ok_or("missing model")?;
    let mut ep = EndpointConfig::new(name, base_url.as_str(), model.as_str());
    for (key, v) in fields {
        match key.as_str() {
            "base_url" | "model" => {}
            "token_env" => ep.token_env = Some(v.clone()),
            "timeout_secs" => ep.timeout_secs = parse_num(key, v)?,
            "max_retries" => ep.max_retries = parse_num(key, v)?,
            "max_parallel" => ep.max_parallel = parse_num(key, v)?,
            "requests_per_minute" => ep.requests_per_minute = Some(parse_num(key, v)?),
            "backoff_base_ms" => ep.backoff_base_ms = parse_num(key, v)?,
            other => return Err(format!("unknown key {other}")),
        }
    }
    ep.validate().map_err(|e| e.to_string())?;
    Ok(ep)
}
