use thiserror::Error;

use crate::bench::BenchError;
use crate::diffusion::DiffusionError;
use crate::eval::EvalError;
use crate::finetune::FinetuneError;
use crate::ingestion::IngestError;
use crate::metrics::MetricError;
use crate::projection::ProjectionError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-level error: one variant per module plus shared I/O failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Finetune(#[from] FinetuneError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("configuration: {0}")]
    Config(String),
}

/// Coarse error classes, used by the command line for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorFamily {
    Config,
    Data,
    Numerical,
}

impl ErrorFamily {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorFamily::Config => 2,
            ErrorFamily::Data => 3,
            ErrorFamily::Numerical => 4,
        }
    }
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }

    pub fn format(path: impl AsRef<std::path::Path>, message: impl Into<String>) -> Self {
        Error::Format { path: path.as_ref().display().to_string(), message: message.into() }
    }

    pub fn family(&self) -> ErrorFamily {
        let numerical = match self {
            Error::Config(_) => return ErrorFamily::Config,
            Error::Metric(e) => e.is_numerical(),
            Error::Projection(e) => e.is_numerical(),
            Error::Finetune(e) => e.is_numerical(),
            Error::Diffusion(e) => e.is_numerical(),
            Error::Eval(e) => e.is_numerical(),
            _ => false,
        };
        if numerical {
            ErrorFamily::Numerical
        } else {
            ErrorFamily::Data
        }
    }
}
