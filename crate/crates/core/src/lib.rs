//! Hard-negative contrastive alignment for geometric diagrams and captions.
//!
//! The crate builds synthetic geometric scenes, renders them to SVG, writes
//! template captions, manufactures hard negatives (rule-based caption edits,
//! scene perturbations, exact top-k retrieval), and trains a small dual
//! encoder with in-batch, hard-negative, or hybrid contrastive losses.
//!
//! Numeric kernels (encoder, losses, gradients, audits) are generic over
//! [`Real`]; the aliases below pin them to `f64`, which is what the CLI and
//! the acceptance suite use.

pub mod caption;
pub mod cli;
pub mod contrastive;
pub mod corpus;
pub mod dsl;
pub mod encoder;
mod error;
pub mod eval;
pub mod geometry;
pub mod negatives;
pub mod render;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

/// Scalar used throughout the CLI pipeline.
pub type Scalar = f64;
pub type FeatureVector = encoder::FeatureVector<Scalar>;
pub type Projection = encoder::Projection<Scalar>;
pub type DualEncoder = encoder::DualEncoder<Scalar>;
pub type EmbeddingMatrix = encoder::EmbeddingMatrix<Scalar>;
pub type MmclipBatch = contrastive::MmclipBatch<Scalar>;
pub type InBatch = contrastive::InBatch<Scalar>;
pub type HybridBatch = contrastive::HybridBatch<Scalar>;
pub type Gradients = contrastive::Gradients<Scalar>;
pub type TrainingData = contrastive::TrainingData<Scalar>;
pub type TrainRun = contrastive::TrainRun<Scalar>;

/// Single-precision variants, handy for memory-bound embedding corpora.
pub mod f32 {
    pub type FeatureVector = crate::encoder::FeatureVector<f32>;
    pub type DualEncoder = crate::encoder::DualEncoder<f32>;
    pub type EmbeddingMatrix = crate::encoder::EmbeddingMatrix<f32>;
}
