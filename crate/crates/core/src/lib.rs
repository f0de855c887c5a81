//! Optimal source weights and transfer quantities for multi-source transfer
//! learning under an asymptotic KL-divergence criterion.
//!
//! The pipeline: fit a weighted MLE ([`mle`]), measure the resulting
//! generalization error by KL to the target ([`kl`]), predict it from Fisher
//! information ([`fisher`]), and choose the weights that minimize the
//! prediction ([`optimizer`]). [`harness`] checks the predictions against
//! Monte Carlo oracles and [`trainer`] runs the dynamic reweighting loops.

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fisher;
pub mod harness;
pub mod kl;
pub mod mle;
pub mod model;
pub mod optimizer;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
pub use fisher::{DirectionMatrix, FisherOperator};
pub use harness::{
    EnsembleSpec, FamilySpec, SourceSpec, SweepResult, TaskEnsemble, TheoremConfig, TheoremId,
    Verification,
};
pub use kl::{KlPrediction, MonteCarloEstimate};
pub use mle::{SourceBlock, WeightedDataset};
pub use model::{ModelFamily, ParameterVector, Sample};
pub use optimizer::{QpMatrix, SolverDiagnostics, TransferPlan};
pub use trainer::{TrainConfig, TrainTrace};
