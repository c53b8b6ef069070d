//! Gradient boosted trees with regularization-aware feature attributions.
//!
//! The crate trains second-order boosted regression trees with ℓ2 leaf
//! regularization and decomposes their predictions into per-feature
//! contributions (PreDecomp) driven by the regularized node values cached
//! at fit time. On top of the individualized attributions it provides the
//! TreeInner / ForestInner / Abs global attribution families, a permutation
//! importance baseline, synthetic benchmark generators, and a replicated
//! experiment harness that scores feature selection by AUC.
//!
//! The numeric core is generic over [`scalar::Scalar`] (f32 or f64); the
//! aliases at the crate root pin the f64 instantiation used by the CLI and
//! the harness.

pub mod attribution;
pub mod data;
pub mod datagen;
pub mod error;
pub mod experiment;
pub mod gbt;
pub mod gfa;
pub mod metrics;
pub mod scalar;

pub use error::{Error, Result};

/// f64 feature matrix.
pub type Matrix = data::Matrix<f64>;
/// f64 labeled dataset.
pub type Dataset = data::Dataset<f64>;
/// f64 training configuration.
pub type TrainConfig = gbt::TrainConfig<f64>;
/// f64 fitted ensemble.
pub type GBTModel = gbt::GBTModel<f64>;
/// f64 tree.
pub type Tree = gbt::Tree<f64>;
/// f64 per-tree attribution matrix.
pub type AttributionMatrix = attribution::AttributionMatrix<f64>;
/// f64 node-value table.
pub type NodeValues = attribution::NodeValues<f64>;
/// f64 global feature attribution result.
pub type GFAResult = gfa::GFAResult<f64>;
