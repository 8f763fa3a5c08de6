//! Gradient-free visual explanations for convolutional classifiers.
//!
//! The crate turns the last spatial feature maps of a classifier into image
//! masks, weights each mask by how closely its masked prediction matches the
//! original and how much it stands out from the others, and sums the weighted
//! masks into a saliency map. A randomized-mask baseline, insertion/deletion
//! faithfulness metrics and heatmap rendering complete the toolkit.

pub mod demo;
pub mod error;
pub mod imageio;
pub mod maskgen;
pub mod metrics;
pub mod model;
pub mod render;
pub mod rise;
pub mod saliency;
pub mod sidu;
pub mod tensor;

pub use error::{Error, Result};
pub use maskgen::{MaskConfig, SoftMask};
pub use metrics::{EvalCurve, PerturbConfig};
pub use model::{Classifier, Inference, ModelSpec};
pub use rise::RiseConfig;
pub use saliency::{Explainer, SaliencyMap};
pub use sidu::{SiduConfig, WeightSet};
pub use tensor::{FeatureStack, ScoreVector, Tensor};
