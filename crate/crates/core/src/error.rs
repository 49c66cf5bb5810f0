use thiserror::Error;

pub type Result<T, E = IaError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum IaError {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("sample {sample_id}: {message}")]
    Validation { sample_id: String, message: String },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("split error: {0}")]
    Split(String),
    #[error("label leakage: {} sample id(s) shared with the checkpoint's training set: {}", .ids.len(), .ids.join(", "))]
    Leakage { ids: Vec<String> },
    #[error("metric error: {0}")]
    Metric(String),
    #[error("missing predictions for {} sample(s): {}", .ids.len(), .ids.join(", "))]
    MissingPredictions { ids: Vec<String> },
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFinite { epoch: usize, step: usize },
    #[error("encoder backend '{backend}': {message}")]
    Backend { backend: String, message: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("heatmap file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl IaError {
    /// True for failures caused by bad user input rather than by the run itself.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            IaError::Parse { .. }
                | IaError::Validation { .. }
                | IaError::Argument(_)
                | IaError::Config(_)
                | IaError::Split(_)
                | IaError::Leakage { .. }
                | IaError::MissingPredictions { .. }
        )
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        IaError::Argument(msg.into())
    }
}
