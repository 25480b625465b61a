//! Model-specific encodings of a [`FeatureMatrix`](crate::features::FeatureMatrix).
//!
//! Sequence models consume the feature matrix directly; the convolutional
//! model takes a [`DescriptorImage`] and the graph model an [`InteractionGraph`].

mod descriptor;
mod graph;

pub use descriptor::*;
pub use graph::*;

#[derive(Debug, thiserror::Error)]
pub enum LayoutError {
    #[error("padding slot (column {col}, channel {channel}) of row {row} is {value}, expected 0")]
    NonZeroPadding { row: usize, col: usize, channel: usize, value: f32 },
    #[error("{0}")]
    Shape(String),
    #[error(transparent)]
    Format(#[from] crate::binio::FormatError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("png: {0}")]
    Png(String),
}
