use std::path::PathBuf;

use dyadkit_core::capture::CaptureError;
use dyadkit_core::features::FeatureError;
use dyadkit_core::manifest::SplitError;
use dyadkit_core::representations::LayoutError;
use dyadkit_nn::NnError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    /// A pipeline stage has not been run for the inputs a model needs.
    #[error("{0}")]
    Pipeline(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    File { path: PathBuf, message: String },
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Capture(#[from] CaptureError),
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }

    pub(crate) fn file(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        HarnessError::File { path: path.into(), message: message.to_string() }
    }
}
