use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments or configuration.
    #[error("{0}")]
    Validation(String),
    /// An upstream artifact has not been produced yet.
    #[error(
        "{stage}: missing input {path} (produced by the `{producer}` stage; run `geocurate {}` first)",
        verb_for(producer)
    )]
    MissingInput {
        stage: &'static str,
        path: String,
        producer: &'static str,
    },
    #[error("{stage}: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("{stage}: endpoint failure: {message}")]
    Endpoint { stage: &'static str, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::MissingInput { .. } | CliError::Stage { .. } => 3,
            CliError::Endpoint { .. } => 4,
        }
    }

    pub fn stage(stage: &'static str, e: impl std::fmt::Display) -> Self {
        CliError::Stage {
            stage,
            message: e.to_string(),
        }
    }
}

/// The command that runs a stage.
pub fn verb_for(stage: &str) -> String {
    match stage {
        "clues-ingest" => "clues ingest".into(),
        "clues-filter" => "clues filter".into(),
        "export-stage1" => "clues export-stage1".into(),
        "export-stage2" => "clues export-stage2".into(),
        other => other.into(),
    }
}
