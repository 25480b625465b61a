//! Skeleton data model, feature extraction, model-input encoders and a
//! synthetic data generator for two-person interaction recognition.

pub mod binio;
pub mod capture;
pub mod features;
pub mod geometry;
pub mod manifest;
pub mod representations;
pub mod skeleton;
pub mod synth;

pub use features::{extract_features, FeatureMatrix};
pub use geometry::Vec3;
pub use skeleton::{BodyPose, Confidence, DyadFrame, DyadSample, InteractionLabel, JointId};
