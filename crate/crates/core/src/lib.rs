//! Experiment laboratory for double, triple and non-monotonic descent in
//! under-complete autoencoders trained on contaminated data.
//!
//! The crate is organised bottom-up:
//!
//! - [`rng`]: seeded, splittable random sub-streams.
//! - [`datagen`]: the linear-subspace generator and its four contamination
//!   models (sample noise, feature noise, domain shift, anomalies).
//! - [`realdata`]: CSV ingestion, variance-based feature selection and
//!   norm-calibrated noising for real tabular data.
//! - [`neuralnet`]: the five-layer MLP autoencoder, exact backprop, Adam and
//!   the training loop.
//! - [`metrics`]: variance-normalised losses, ROC-AUC, KNN-DAT and the
//!   descent-peak detector.
//! - [`sweep`]: model-wise, epoch-wise and sample-wise sweeps with seed
//!   aggregation and a bounded worker pool.

pub mod datagen;
pub mod error;
pub mod metrics;
pub mod neuralnet;
pub mod realdata;
pub mod rng;
pub mod sweep;

pub use error::{Error, Result};
