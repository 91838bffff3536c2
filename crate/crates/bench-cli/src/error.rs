use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("runner error: {0}")]
    Runner(String),
    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl From<raas_daemon::DaemonError> for BenchError {
    fn from(e: raas_daemon::DaemonError) -> Self {
        BenchError::Runner(e.to_string())
    }
}

impl From<verbs_sim::SimError> for BenchError {
    fn from(e: verbs_sim::SimError) -> Self {
        BenchError::Runner(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;
