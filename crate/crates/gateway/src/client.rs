use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use base64::Engine as _;
use serde_json::{json, Value};
use tokio::sync::Mutex;

use crate::{EndpointConfig, GatewayError};

/// Image attached to a chat request: a URL passed through as-is, or raw
/// bytes sent inline as a base64 data URL.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImageInput {
    Url(String),
    Bytes { data: Vec<u8>, mime: String },
}

impl ImageInput {
    /// `http(s)://` and `data:` references are URLs; anything else is a
    /// file path, resolved against `base_dir` when relative.
    pub fn from_ref(image_ref: &str, base_dir: Option<&Path>) -> Result<Self, GatewayError> {
        if ["http://", "https://", "data:"]
            .iter()
            .any(|p| image_ref.starts_with(p))
        {
            return Ok(ImageInput::Url(image_ref.to_owned()));
        }
        let path = match base_dir {
            Some(dir) if Path::new(image_ref).is_relative() => dir.join(image_ref),
            _ => Path::new(image_ref).to_path_buf(),
        };
        let data = std::fs::read(&path)
            .map_err(|e| GatewayError::Manifest(format!("cannot read image {}: {e}", path.display())))?;
        Ok(ImageInput::Bytes {
            data,
            mime: mime_for(&path).to_owned(),
        })
    }

    pub fn to_url(&self) -> String {
        match self {
            ImageInput::Url(u) => u.clone(),
            ImageInput::Bytes { data, mime } => format!(
                "data:{mime};base64,{}",
                base64::engine::general_purpose::STANDARD.encode(data)
            ),
        }
    }
}

fn mime_for(path: &Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => "image/png",
        Some("webp") => "image/webp",
        Some("gif") => "image/gif",
        _ => "image/jpeg",
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryOutcome {
    pub text: String,
    /// Wall time including retries and backoff.
    pub latency_ms: u64,
    /// Attempts beyond the first.
    pub retries: u32,
}

/// Spaces request starts at least `interval` apart.
#[derive(Debug)]
struct RateLimiter {
    interval: Duration,
    next: Mutex<Instant>,
}

impl RateLimiter {
    async fn acquire(&self) {
        let wait_until = {
            let mut next = self.next.lock().await;
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.interval;
            slot
        };
        tokio::time::sleep_until(wait_until.into()).await;
    }
}

/// Async client for one endpoint. Cheap to clone.
#[derive(Debug, Clone)]
pub struct Gateway {
    config: EndpointConfig,
    http: reqwest::Client,
    token: Option<String>,
    limiter: Option<Arc<RateLimiter>>,
}

impl Gateway {
    pub fn new(config: EndpointConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let token = config.token()?;
        let http = reqwest::Client::builder()
            .timeout(config.timeout())
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        let limiter = config.requests_per_minute.map(|rpm| {
            Arc::new(RateLimiter {
                interval: Duration::from_secs_f64(60.0 / rpm as f64),
                next: Mutex::new(Instant::now()),
            })
        });
        Ok(Self {
            config,
            http,
            token,
            limiter,
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    async fn post_once(&self, path: &str, body: &Value) -> Result<Value, GatewayError> {
        if let Some(limiter) = &self.limiter {
            limiter.acquire().await;
        }
        let mut req = self.http.post(self.config.url(path)).json(body);
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().await.map_err(|e| GatewayError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().await.map_err(|e| GatewayError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(GatewayError::Http {
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            });
        }
        serde_json::from_str(&text).map_err(|e| GatewayError::Decode(format!("{e}: {}", truncate(&text))))
    }

    /// POSTs `body`, retrying retryable failures up to `max_retries` times
    /// with exponential backoff. Returns the decoded body and retry count.
    pub(crate) async fn post_json(&self, path: &str, body: &Value) -> Result<(Value, u32), GatewayError> {
        let mut retries = 0;
        loop {
            match self.post_once(path, body).await {
                Ok(v) => return Ok((v, retries)),
                Err(e) if e.is_retryable() && retries < self.config.max_retries => {
                    retries += 1;
                    tokio::time::sleep(self.config.backoff(retries)).await;
                }
                Err(e) if e.is_retryable() => {
                    return Err(GatewayError::Exhausted {
                        attempts: retries + 1,
                        last: e.to_string(),
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Sends one chat-completion request carrying `prompt` and the image.
    pub async fn query_model(&self, image: &ImageInput, prompt: &str) -> Result<QueryOutcome, GatewayError> {
        let body = json!({
            "model": self.config.model,
            "messages": [{
                "role": "user",
                "content": [
                    {"type": "text", "text": prompt},
                    {"type": "image_url", "image_url": {"url": image.to_url()}}
                ]
            }]
        });
        let start = Instant::now();
        let (resp, retries) = self.post_json("chat/completions", &body).await?;
        let text = message_text(&resp)?;
        Ok(QueryOutcome {
            text,
            latency_ms: start.elapsed().as_millis() as u64,
            retries,
        })
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(200).collect()
}

/// `choices[0].message.content`, either a string or a list of text parts.
fn message_text(resp: &Value) -> Result<String, GatewayError> {
    let content = resp.pointer("/choices/0/message/content").ok_or_else(|| {
        GatewayError::Decode(format!(
            "no choices[0].message.content in {}",
            truncate(&resp.to_string())
        ))
    })?;
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Null => Ok(String::new()),
        Value::Array(parts) => Ok(parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect::<Vec<_>>()
            .join("")),
        other => Err(GatewayError::Decode(format!("content is {other}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn content_shapes() {
        let s = json!({"choices": [{"message": {"content": "hi"}}]});
        assert_eq!(message_text(&s).unwrap(), "hi");
        let parts = json!({"choices": [{"message": {"content": [{"type": "text", "text": "a"}, {"text": "b"}]}}]});
        assert_eq!(message_text(&parts).unwrap(), "ab");
        assert!(message_text(&json!({"error": "x"})).is_err());
    }

    #[test]
    fn inline_images_become_data_urls() {
        let img = ImageInput::Bytes {
            data: vec![1, 2, 3],
            mime: "image/png".into(),
        };
        assert_eq!(img.to_url(), "data:image/png;base64,AQID");
        let url = ImageInput::from_ref("https://x/y.jpg", None).unwrap();
        assert_eq!(url.to_url(), "https://x/y.jpg");
        assert!(ImageInput::from_ref("missing/file.jpg", None).is_err());
    }
}
