use dyadkit_core::binio::FormatError;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("invalid model spec: {0}")]
    Spec(String),
    #[error("training diverged at step {step}: loss is {loss}")]
    Training { step: usize, loss: f64 },
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] FormatError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
