//! Desk-scale lab for gradient-guided lesioning of a micro language model and
//! the downstream voxel-wise encoding analysis.
//!
//! The crate trains a small decoder-only transformer on synthetic languages,
//! scores per-parameter importance from accumulated fine-tuning gradients,
//! carves core and language-specific lesion masks, and measures the lesions'
//! effect on synthetic BOLD encoding, representational geometry and probing
//! tasks. All numeric kernels are generic over the [`Scalar`] float width;
//! the pipeline runs models in f32 and analysis in f64.

pub mod encoding;
pub mod error;
pub mod geometry;
pub mod lesion;
pub mod linalg;
pub mod microlm;
pub mod pipeline;
pub mod scalar;
pub mod stats;
pub mod synth;
pub mod tensorio;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Model-precision tensor types (checkpoint width).
pub type Tensor32 = tensorio::NamedTensor<f32>;
pub type Store32 = tensorio::TensorStore<f32>;
pub type Model32 = microlm::Model<f32>;

/// Analysis-precision types (gradient checks, encoding, statistics).
pub type Tensor64 = tensorio::NamedTensor<f64>;
pub type Store64 = tensorio::TensorStore<f64>;
pub type Model64 = microlm::Model<f64>;
pub type Mat64 = linalg::Mat<f64>;
