//! Multi-objective contextual bandit routing of queries across retrieval
//! backends, with a stochastic backend simulator and experiment harness.

pub mod encoder;
pub mod env;
pub mod error;
pub mod ggi;
pub mod harness;
pub mod learning;
pub mod metrics;
pub mod objective;
pub mod policy;
pub mod scalar;
pub mod streams;
pub mod trace;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type GiniWeights64 = ggi::GiniWeights<f64>;
pub type GiniWeights32 = ggi::GiniWeights<f32>;
pub type LossVector64 = ggi::LossVector<f64>;
pub type LossVector32 = ggi::LossVector<f32>;
pub type FeatureVector64 = encoder::FeatureVector<f64>;
pub type FeatureVector32 = encoder::FeatureVector<f32>;
pub type NetworkParams64 = encoder::NetworkParams<f64>;
pub type NetworkParams32 = encoder::NetworkParams<f32>;
