use std::time::Duration;

use geocurate_core::clues::{Tagger, TaggerError};
use serde::Deserialize;
use serde_json::json;

/// Client for an HTTP entity tagger: `POST {url}` with `{"text": ...}`,
/// answered by `{"entities": [...]}`.
///
/// Uses a blocking client, so it must not be driven from inside an async
/// runtime.
#[derive(Debug, Clone)]
pub struct EndpointTagger {
    url: String,
    http: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct TagResponse {
    entities: Vec<String>,
}

impl EndpointTagger {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Result<Self, TaggerError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| TaggerError::Unavailable(e.to_string()))?;
        Ok(Self { url: url.into(), http })
    }
}

impl Tagger for EndpointTagger {
    fn tag(&self, text: &str) -> Result<Vec<String>, TaggerError> {
        let resp = self
            .http
            .post(&self.url)
            .json(&json!({ "text": text }))
            .send()
            .map_err(|e| TaggerError::Unavailable(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(TaggerError::Unavailable(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(TaggerError::Rejected(format!("HTTP {status}")));
        }
        let body: TagResponse = resp.json().map_err(|e| TaggerError::Rejected(e.to_string()))?;
        Ok(body.entities)
    }
}
