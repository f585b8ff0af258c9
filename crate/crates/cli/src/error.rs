use std::io;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use surfi_core::eval::EvalError;
use surfi_core::synth::SynthError;
use surfi_core::trace::TraceError;
use surfi_core::PipelineError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: TraceError },
    #[error("invalid config {path}: {}", problems.join("; "))]
    Config { path: PathBuf, problems: Vec<String> },
    #[error("invalid protocol {path}: {source}")]
    Protocol { path: PathBuf, source: SynthError },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl CliError {
    pub fn read(path: &Path) -> impl FnOnce(io::Error) -> Self + '_ {
        move |source| Self::Read { path: path.to_path_buf(), source }
    }

    pub fn write(path: &Path) -> impl FnOnce(io::Error) -> Self + '_ {
        move |source| Self::Write { path: path.to_path_buf(), source }
    }

    pub fn parse(path: &Path) -> impl FnOnce(TraceError) -> Self + '_ {
        move |e| match e {
            TraceError::Io(source) => Self::Read { path: path.to_path_buf(), source },
            source => Self::Parse { path: path.to_path_buf(), source },
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Self::Read { .. } => "read",
            Self::Write { .. } => "write",
            Self::Parse { .. } => "parse",
            Self::Config { .. } => "config",
            Self::Protocol { .. } => "protocol",
            Self::Usage(_) => "usage",
            Self::Pipeline(_) => "pipeline",
            Self::Synth(_) => "synth",
            Self::Eval(_) => "eval",
        }
    }

    fn path(&self) -> Option<&Path> {
        match self {
            Self::Read { path, .. }
            | Self::Write { path, .. }
            | Self::Parse { path, .. }
            | Self::Config { path, .. }
            | Self::Protocol { path, .. } => Some(path),
            Self::Synth(SynthError::Write { path, .. }) => Some(path),
            Self::Eval(
                EvalError::Io { path, .. }
                | EvalError::Manifest { path, .. }
                | EvalError::Trace { path, .. }
                | EvalError::Pipeline { path, .. },
            ) => Some(path),
            _ => None,
        }
    }

    /// Machine-readable form printed on failure.
    pub fn to_json(&self) -> Value {
        let mut err = json!({ "kind": self.kind(), "message": self.to_string() });
        if let Some(p) = self.path() {
            err["path"] = json!(p.display().to_string());
        }
        if let Self::Config { problems, .. } = self {
            err["problems"] = json!(problems);
        }
        json!({ "error": err })
    }
}
