use thiserror::Error;

#[derive(Debug, Error)]
pub enum TwuError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("training diverged{}: {reason}", epoch.map(|e| format!(" at epoch {e}")).unwrap_or_default())]
    Diverged { epoch: Option<usize>, reason: String },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("image decode error: {0}")]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TwuError>;

pub(crate) fn invalid(msg: impl Into<String>) -> TwuError {
    TwuError::InvalidParameter(msg.into())
}

pub(crate) fn shape(msg: impl Into<String>) -> TwuError {
    TwuError::Shape(msg.into())
}
