//! Config-driven experiment stages: feature extraction, prompting runs and
//! report generation. Every stage writes under the configured output
//! directory and is safe to rerun.

mod config;
mod extract;
mod report;
mod run;

use std::path::{Path, PathBuf};

pub use config::{
    CorpusSection, EvalSection, FeaturesSection, LlmMode, LlmSection, PromptsSection, RunConfig,
    RunEntry,
};
pub use extract::{cmd_extract, load_features, ExtractFailure, ExtractSummary, FeatureStore};
pub use report::{cmd_eval, EvalSummary};
pub use run::{
    build_client, cmd_run, expand_runs, load_predictions, render_all, Experiment, PlannedRun,
    PredictionRecord, RunSummary,
};

use crate::corpus::CorpusError;
use crate::eval::EvalError;
use crate::llmclient::LlmError;
use crate::promptkit::PromptError;
use crate::template::TemplateError;

/// Version written into every JSON/JSONL artifact.
pub const ARTIFACT_SCHEMA_VERSION: u32 = 1;

/// Error classes that map to distinct process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Transport,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Json { path: PathBuf, msg: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Prompt(PromptError),
    #[error("{context}: {source}")]
    Llm {
        context: String,
        #[source]
        source: LlmError,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Data(String),
}

impl From<PromptError> for PipelineError {
    fn from(e: PromptError) -> Self {
        match e {
            PromptError::Template(t) => PipelineError::Template(t),
            other => PipelineError::Prompt(other),
        }
    }
}

impl PipelineError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            PipelineError::Config(_) | PipelineError::Template(_) => ErrorKind::Config,
            PipelineError::Prompt(PromptError::Invalid { .. } | PromptError::UnknownPreset(_)) => {
                ErrorKind::Config
            }
            PipelineError::Llm { source, .. } if source.is_transport() => ErrorKind::Transport,
            PipelineError::Llm {
                source: LlmError::Config(_),
                ..
            } => ErrorKind::Config,
            _ => ErrorKind::Data,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_text(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

/// Writes via a temporary sibling and rename.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, contents).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| PipelineError::Json {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| PipelineError::Json {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
