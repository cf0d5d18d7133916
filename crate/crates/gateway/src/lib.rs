//! Clients for the external services the curation pipeline depends on:
//! a chat-completion style vision-language endpoint, an embeddings
//! endpoint and an entity-tagging endpoint. Also home to checkpointed
//! batch inference and a scriptable mock server for tests.
//!
//! Request and response shapes are documented in `docs/wire-format.md`.

mod batch;
mod client;
mod config;
mod embed;
pub mod mock;
mod proportion;
mod tagger;

use thiserror::Error;

pub use batch::{batch_infer, read_manifest, BatchOptions, BatchOutcome, Manifest, ManifestEntry};
pub use client::{Gateway, ImageInput, QueryOutcome};
pub use config::EndpointConfig;
pub use embed::{fetch_embeddings, EmbedItem};
pub use proportion::{proportion_experiment, ProportionVariant};
pub use tagger::EndpointTagger;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("endpoint configuration: {0}")]
    Config(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("unexpected response body: {0}")]
    Decode(String),
    #[error("checkpoint {path} is unreadable at line {line}: {message}; refusing to start")]
    Checkpoint { path: String, line: usize, message: String },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("embedding dimension {found} differs from {expected} (item {id:?})")]
    Dimension { id: String, expected: usize, found: usize },
    #[error("evaluation: {0}")]
    Eval(#[from] geocurate_core::eval::EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl GatewayError {
    /// Whether another attempt could succeed: transport failures, 5xx and 429.
    pub fn is_retryable(&self) -> bool {
        match self {
            GatewayError::Transport(_) => true,
            GatewayError::Http { status, .. } => *status >= 500 || *status == 429,
            _ => false,
        }
    }
}
