//! Scriptable stand-in for the chat, embeddings and tagging endpoints.
//!
//! Responses come from a JSON fixture:
//!
//! ```json
//! {
//!   "chat": {
//!     "default": {"content": "{'country': 'France', 'city': 'Paris'}"},
//!     "images": {
//!       "https://img.example/001.jpg": [{"status": 500}, {"content": "..."}]
//!     }
//!   },
//!   "embeddings": {"dimension": 16, "vectors": {"building": [3, 4, 0]}},
//!   "tagger": {"fail_first": 0, "entities": {"some text": ["Chile"]}}
//! }
//! ```
//!
//! A chat script is keyed by the request's image URL. The n-th request for
//! an image gets step n; the last step repeats. Texts without a scripted
//! embedding get a pseudo-random vector derived from their hash; texts
//! without scripted entities are tagged with the built-in gazetteer.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use geocurate_core::clues::GazetteerTagger;
use geocurate_core::eval::Gazetteer;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tokio::sync::oneshot;

use crate::GatewayError;

/// One scripted reply.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Step {
    #[serde(default = "ok")]
    pub status: u16,
    /// Assistant message text for a successful chat reply.
    #[serde(default)]
    pub content: Option<String>,
    /// Raw response body, overriding `content`.
    #[serde(default)]
    pub body: Option<Value>,
    #[serde(default)]
    pub delay_ms: u64,
}

fn ok() -> u16 {
    200
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChatScript {
    #[serde(default)]
    pub default: Option<Step>,
    #[serde(default)]
    pub images: HashMap<String, Vec<Step>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingScript {
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    #[serde(default)]
    pub vectors: HashMap<String, Vec<f64>>,
}

impl Default for EmbeddingScript {
    fn default() -> Self {
        Self {
            dimension: default_dimension(),
            vectors: HashMap::new(),
        }
    }
}

fn default_dimension() -> usize {
    16
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaggerScript {
    /// Answer this many requests with 503 before behaving normally.
    #[serde(default)]
    pub fail_first: usize,
    #[serde(default)]
    pub entities: HashMap<String, Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockFixture {
    #[serde(default)]
    pub chat: ChatScript,
    #[serde(default)]
    pub embeddings: EmbeddingScript,
    #[serde(default)]
    pub tagger: TaggerScript,
}

impl MockFixture {
    pub fn from_path(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| GatewayError::Config(format!("mock fixture {}: {e}", path.display())))
    }
}

/// Request counters, shared between the server and its handle.
#[derive(Debug, Default)]
pub struct Stats {
    pub chat: AtomicUsize,
    pub embeddings: AtomicUsize,
    pub tagger: AtomicUsize,
    in_flight: AtomicUsize,
    /// Highest number of chat requests served concurrently.
    pub max_in_flight: AtomicUsize,
    per_image: Mutex<HashMap<String, usize>>,
}

impl Stats {
    pub fn snapshot(&self) -> Value {
        json!({
            "chat": self.chat.load(Ordering::SeqCst),
            "embeddings": self.embeddings.load(Ordering::SeqCst),
            "tagger": self.tagger.load(Ordering::SeqCst),
        })
    }
}

struct MockState {
    fixture: MockFixture,
    stats: Arc<Stats>,
    gazetteer: GazetteerTagger,
}

type Shared = Arc<MockState>;

/// Builds the axum router serving the fixture.
pub fn router(fixture: MockFixture, stats: Arc<Stats>) -> Router {
    let state = Arc::new(MockState {
        fixture,
        stats,
        gazetteer: GazetteerTagger::from_gazetteer(Gazetteer::builtin()),
    });
    Router::new()
        .route("/chat/completions", post(chat))
        .route("/v1/chat/completions", post(chat))
        .route("/embeddings", post(embeddings))
        .route("/v1/embeddings", post(embeddings))
        .route("/tag", post(tag))
        .route("/__stats", get(stats_handler))
        .with_state(state)
}

fn image_url(body: &Value) -> Option<String> {
    body.get("messages")?
        .as_array()?
        .iter()
        .filter_map(|m| m.get("content")?.as_array())
        .flatten()
        .find_map(|part| part.pointer("/image_url/url")?.as_str().map(str::to_owned))
}

fn error(status: StatusCode, message: &str) -> Response {
    (status, Json(json!({"error": {"message": message}}))).into_response()
}

async fn chat(State(state): State<Shared>, Json(body): Json<Value>) -> Response {
    state.stats.chat.fetch_add(1, Ordering::SeqCst);
    let now = state.stats.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    state.stats.max_in_flight.fetch_max(now, Ordering::SeqCst);
    let response = chat_reply(&state, body).await;
    state.stats.in_flight.fetch_sub(1, Ordering::SeqCst);
    response
}

async fn chat_reply(state: &MockState, body: Value) -> Response {
    let url = image_url(&body).unwrap_or_default();
    let nth = {
        let mut seen = state.stats.per_image.lock().expect("stats lock");
        let n = seen.entry(url.clone()).or_default();
        *n += 1;
        *n - 1
    };
    let step = match state.fixture.chat.images.get(&url) {
        Some(steps) if !steps.is_empty() => steps[nth.min(steps.len() - 1)].clone(),
        _ => match &state.fixture.chat.default {
            Some(step) => step.clone(),
            None => return error(StatusCode::NOT_FOUND, &format!("no script for image {url:?}")),
        },
    };
    if step.delay_ms > 0 {
        tokio::time::sleep(Duration::from_millis(step.delay_ms)).await;
    }
    let status = StatusCode::from_u16(step.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    if !status.is_success() {
        return error(status, "scripted failure");
    }
    let body = step.body.unwrap_or_else(|| {
        json!({
            "object": "chat.completion",
            "model": body.get("model").cloned().unwrap_or(Value::Null),
            "choices": [{
                "index": 0,
                "message": {"role": "assistant", "content": step.content.unwrap_or_default()},
                "finish_reason": "stop"
            }]
        })
    });
    (status, Json(body)).into_response()
}

/// Deterministic stand-in vector in `[-1, 1]^dim`.
fn hashed_vector(text: &str, dim: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(dim);
    let mut counter = 0u32;
    while out.len() < dim {
        let mut h = Sha256::new();
        h.update(counter.to_le_bytes());
        h.update(text.as_bytes());
        out.extend(h.finalize().iter().map(|b| *b as f64 / 127.5 - 1.0));
        counter += 1;
    }
    out.truncate(dim);
    out
}

async fn embeddings(State(state): State<Shared>, Json(body): Json<Value>) -> Response {
    state.stats.embeddings.fetch_add(1, Ordering::SeqCst);
    let inputs: Vec<String> = match body.get("input") {
        Some(Value::String(s)) => vec![s.clone()],
        Some(Value::Array(a)) => a.iter().filter_map(Value::as_str).map(str::to_owned).collect(),
        _ => return error(StatusCode::BAD_REQUEST, "input must be a string or an array of strings"),
    };
    let script = &state.fixture.embeddings;
    let data: Vec<Value> = inputs
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let v = script
                .vectors
                .get(t)
                .cloned()
                .unwrap_or_else(|| hashed_vector(t, script.dimension));
            json!({"object": "embedding", "index": i, "embedding": v})
        })
        .collect();
    Json(json!({"object": "list", "data": data})).into_response()
}

async fn tag(State(state): State<Shared>, Json(body): Json<Value>) -> Response {
    let n = state.stats.tagger.fetch_add(1, Ordering::SeqCst);
    if n < state.fixture.tagger.fail_first {
        return error(StatusCode::SERVICE_UNAVAILABLE, "scripted outage");
    }
    let Some(text) = body.get("text").and_then(Value::as_str) else {
        return error(StatusCode::BAD_REQUEST, "missing text");
    };
    let entities = match state.fixture.tagger.entities.get(text) {
        Some(e) => e.clone(),
        None => state.gazetteer.find(text),
    };
    Json(json!({ "entities": entities })).into_response()
}

async fn stats_handler(State(state): State<Shared>) -> Json<Value> {
    Json(state.stats.snapshot())
}

/// Serves `fixture` on `listener` until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    fixture: MockFixture,
    stats: Arc<Stats>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(fixture, stats))
        .with_graceful_shutdown(shutdown)
        .await
}

/// A mock server running on a background thread. Stops when dropped.
pub struct MockServer {
    addr: SocketAddr,
    stats: Arc<Stats>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl MockServer {
    /// Binds an ephemeral port on 127.0.0.1 and starts serving.
    pub fn start(fixture: MockFixture) -> Result<Self, GatewayError> {
        let std_listener = std::net::TcpListener::bind("127.0.0.1:0")?;
        std_listener.set_nonblocking(true)?;
        let addr = std_listener.local_addr()?;
        let stats = Arc::new(Stats::default());
        let (tx, rx) = oneshot::channel::<()>();
        let server_stats = stats.clone();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_current_thread()
                .enable_all()
                .build()
                .expect("mock runtime");
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(std_listener).expect("mock listener");
                let _ = serve(listener, fixture, server_stats, async {
                    let _ = rx.await;
                })
                .await;
            });
        });
        Ok(Self {
            addr,
            stats,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stats(&self) -> &Stats {
        &self.stats
    }

    pub fn chat_requests(&self) -> usize {
        self.stats.chat.load(Ordering::SeqCst)
    }

    pub fn embedding_requests(&self) -> usize {
        self.stats.embeddings.load(Ordering::SeqCst)
    }

    pub fn tagger_requests(&self) -> usize {
        self.stats.tagger.load(Ordering::SeqCst)
    }

    /// Chat requests received for one image URL.
    pub fn requests_for(&self, image_url: &str) -> usize {
        self.stats
            .per_image
            .lock()
            .expect("stats lock")
            .get(image_url)
            .copied()
            .unwrap_or(0)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
