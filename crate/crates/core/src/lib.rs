//! Federated learning simulator: local training with an adaptive KL pull
//! toward the global model, per-layer Wasserstein-barycenter aggregation,
//! FedAvg and FedProx baselines, and training diagnostics.

pub mod adam;
pub mod checkpoint;
pub mod client;
pub mod config;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod nn;
pub mod ot;
pub mod runtime;
pub mod tensor;

pub use client::Algorithm;
pub use error::{Error, Result};
pub use runtime::{ExperimentConfig, RoundReport};
