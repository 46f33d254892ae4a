//! Variation-aware temporal alignment of embedding sequences.
//!
//! Two sequences of frame embeddings are aligned with entropy-regularized
//! optimal transport. Each side gets an extra *virtual frame* that absorbs
//! background or redundant content, and the plan is pulled toward a mixture of
//! a diagonal (consistency) prior and a prior centred on the plan's own best
//! matches (optimality). The crate also provides the full training objective
//! with gradients, a toy encoder trainer, evaluation metrics and a synthetic
//! benchmark generator with exact ground truth.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to double precision, which is what the pipelines use.

pub mod aligner;
pub mod error;
pub mod export;
pub mod metrics;
pub mod priors;
pub mod scalar;
pub mod seqcore;
pub mod sinkhorn;
pub mod synthgen;
pub mod trainer;
pub mod vavaloss;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use seqcore::Hyperparams;

pub type EmbeddingSequence = seqcore::EmbeddingSequence<f64>;
pub type CostMatrix = seqcore::CostMatrix<f64>;
pub type WeightVector = seqcore::WeightVector<f64>;
pub type TransportPlan = sinkhorn::TransportPlan<f64>;
pub type PriorMatrix = priors::PriorMatrix<f64>;
pub type LossBreakdown = vavaloss::LossBreakdown<f64>;

pub type EmbeddingSequenceF32 = seqcore::EmbeddingSequence<f32>;
pub type TransportPlanF32 = sinkhorn::TransportPlan<f32>;
