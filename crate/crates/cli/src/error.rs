use std::fmt;
use std::process::ExitCode;

use tweetsent::corpus::CorpusError;
use tweetsent::metrics::MetricsError;
use tweetsent::model::ModelError;
use tweetsent::preprocess::CacheError;

/// Failure of a subcommand, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config values or option combinations. Exit 1.
    Usage(String),
    /// Unreadable, unwritable or malformed files. Exit 2.
    Data(String),
    /// Training produced a non-finite loss. Exit 3.
    Divergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Divergence(_) => 3,
        })
    }

    pub fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "{m}"),
            CliError::Divergence(m) => write!(f, "training diverged: {m}"),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::InvalidSplit { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidConfig(_) | ModelError::InvalidTrainConfig(_) => {
                CliError::Usage(e.to_string())
            }
            ModelError::NonFiniteLoss { .. } => CliError::Divergence(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<CacheError> for CliError {
    fn from(e: CacheError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Data(e.to_string())
    }
}
