//! Ordinal threshold fitting for predicted CSAT.
//!
//! A binary classifier emits the probability that a call has low customer
//! satisfaction. Four descending thresholds turn that probability into a 1-5
//! predicted CSAT (pCSAT). This crate fits those thresholds so the pCSAT
//! distribution of a group of calls matches its survey CSAT distribution, and runs
//! a rolling-trial harness comparing baseline, global, and per-group thresholds.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`). The aliases below
//! fix the scalar for the common cases; the harness and file formats use `f64`.

pub mod config;
pub mod domain;
pub mod error;
pub mod experiment;
pub mod io;
pub mod loss;
pub mod mapping;
pub mod optimizer;
pub mod rng;
pub mod scalar;
pub mod strategy;
pub mod synth;

pub use domain::{CsatLevel, GroupId, GroupTrainingStats, OrdinalDistribution};
pub use error::{Error, Result};
pub use mapping::BoundaryMode;
pub use scalar::Scalar;

pub type ScoredCall = domain::ScoredCall<f64>;
pub type ScoredCallF32 = domain::ScoredCall<f32>;
pub type Thresholds = domain::Thresholds<f64>;
pub type ThresholdsF32 = domain::Thresholds<f32>;
pub type LossBreakdown = domain::LossBreakdown<f64>;
pub type LossBreakdownF32 = domain::LossBreakdown<f32>;
pub type LabeledPool = optimizer::LabeledPool<f64>;
pub type LabeledPoolF32 = optimizer::LabeledPool<f32>;
pub type FitResult = optimizer::FitResult<f64>;
pub type FitResultF32 = optimizer::FitResult<f32>;
pub type SearchOptions = optimizer::SearchOptions<f64>;
pub type StrategyConfig = strategy::StrategyConfig<f64>;
pub type ExperimentConfig = experiment::ExperimentConfig<f64>;
pub type ConditionReport = experiment::ConditionReport<f64>;
pub type BinCell = experiment::BinCell<f64>;
