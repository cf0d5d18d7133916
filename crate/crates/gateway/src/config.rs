use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::GatewayError;

/// Connection settings for one named endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub name: String,
    /// Base URL; `/chat/completions` and `/embeddings` are appended.
    pub base_url: String,
    /// Environment variable holding the bearer token, if the endpoint needs one.
    #[serde(default)]
    pub token_env: Option<String>,
    pub model: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub max_parallel: usize,
    /// Requests-per-minute cap; `None` for unlimited.
    #[serde(default)]
    pub requests_per_minute: Option<u32>,
    /// First retry delay; doubles on every further retry.
    pub backoff_base_ms: u64,
}

impl EndpointConfig {
    pub fn new(name: impl Into<String>, base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            base_url: base_url.into(),
            token_env: None,
            model: model.into(),
            timeout_secs: 60.0,
            max_retries: 3,
            max_parallel: 4,
            requests_per_minute: None,
            backoff_base_ms: 500,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |m: String| Err(GatewayError::Config(format!("{}: {m}", self.name)));
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return bad(format!("base_url {:?} is not an http(s) URL", self.base_url));
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return bad(format!("timeout must be positive, got {}", self.timeout_secs));
        }
        if self.max_parallel == 0 {
            return bad("max_parallel must be at least 1".into());
        }
        if self.requests_per_minute == Some(0) {
            return bad("requests_per_minute must be positive when set".into());
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    /// Delay before retry number `retry` (1-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = 1u64 << (retry.saturating_sub(1)).min(16);
        Duration::from_millis(self.backoff_base_ms.saturating_mul(factor))
    }

    /// Reads the bearer token from the configured environment variable.
    pub fn token(&self) -> Result<Option<String>, GatewayError> {
        match &self.token_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| GatewayError::Config(format!("{}: environment variable {var} is not set", self.name))),
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!(
            "{}/{}",
            self.base_url.trim_end_matches('/'),
            path.trim_start_matches('/')
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        let mut c = EndpointConfig::new("e", "http://localhost:1", "m");
        assert!(c.validate().is_ok());
        c.max_parallel = 0;
        assert!(c.validate().is_err());
        c.max_parallel = 1;
        c.timeout_secs = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn backoff_doubles() {
        let mut c = EndpointConfig::new("e", "http://x", "m");
        c.backoff_base_ms = 100;
        assert_eq!(c.backoff(1), Duration::from_millis(100));
        assert_eq!(c.backoff(3), Duration::from_millis(400));
    }

    #[test]
    fn url_joining() {
        let c = EndpointConfig::new("e", "http://x/v1/", "m");
        assert_eq!(c.url("/chat/completions"), "http://x/v1/chat/completions");
    }
}
