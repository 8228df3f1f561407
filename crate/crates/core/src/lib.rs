//! Latency Atlas: learned per-phase latency models for convolutional neural
//! networks on GPU-class devices.
//!
//! The library splits a layer's wall time into three phases (preprocess,
//! execute, postprocess), trains one small regression network per
//! (layer kind, phase) pair from microbenchmark timing data, and composes
//! the per-layer phase predictions into whole-network inference and
//! training time estimates.
//!
//! Module map:
//!
//! - [`netspec`] — networks, layers, devices, and their JSON file formats.
//! - [`features`] — the frozen feature-vector layouts shared by training
//!   and prediction.
//! - [`bench`] — microbenchmark suite generation, the synthetic timing
//!   oracle, measurement ingestion, outlier cleanup, and dataset archives.
//! - [`nn`] — the minimal neural-network engine (dense + 1-D convolution,
//!   exact backprop, Adam, the two log-space losses).
//! - [`models`] — the PerfNet / PerfNetV2 architectures, the training
//!   procedure, and predictor bundles on disk.
//! - [`compose`] — single-batch / single-epoch composition of phase
//!   predictions, plus the naive-sum baseline.
//! - [`metrics`] — MAPE / MAE / RMSE / R² and evaluation reports.

pub mod bench;
pub mod compose;
pub mod error;
pub mod features;
pub mod metrics;
pub mod models;
pub mod netspec;
pub mod nn;
pub mod seed;

pub use error::{Error, Result};
