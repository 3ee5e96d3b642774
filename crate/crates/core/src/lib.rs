//! Late fusion of inducer prediction scores.
//!
//! Scores from `m` inducers are min-max normalized, combined per sample as a weighted sum,
//! and the weights are fitted by minimizing the mean squared error against the ground truth
//! with one of seven strategies ([`optimizers::Method`]). Fused rankings are scored with
//! mean average precision at a cutoff, grouped per video.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases below fix the
//! scalar for the common case.

pub mod evaluation;
pub mod fusion;
pub mod ingestion;
pub mod optimizers;
pub mod pipeline;
pub mod scalar;
pub mod synth;

pub use scalar::Scalar;

pub type ScoreMatrixF64 = ingestion::ScoreMatrix<f64>;
pub type ScoreMatrixF32 = ingestion::ScoreMatrix<f32>;
pub type WeightVectorF64 = fusion::WeightVector<f64>;
pub type WeightVectorF32 = fusion::WeightVector<f32>;
pub type FusedScoresF64 = fusion::FusedScores<f64>;
pub type FusedScoresF32 = fusion::FusedScores<f32>;
pub type OptimizerConfigF64 = optimizers::OptimizerConfig<f64>;
pub type OptimizerConfigF32 = optimizers::OptimizerConfig<f32>;
pub type OptimizerReportF64 = optimizers::OptimizerReport<f64>;
pub type OptimizerReportF32 = optimizers::OptimizerReport<f32>;
pub type NormalizationParamsF64 = ingestion::NormalizationParams<f64>;
pub type NormalizationParamsF32 = ingestion::NormalizationParams<f32>;
