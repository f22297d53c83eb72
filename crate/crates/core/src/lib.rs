//! Selective-prediction models, the Mirage artificial-uncertainty attack and
//! plaintext calibration auditing.
//!
//! The crate is organised bottom-up:
//!
//! * [`data`]: datasets, generators, CSV ingestion and region predicates.
//! * [`nets`]: dense ReLU classifiers and Gaussian-head regressors with manual
//!   backpropagation and temperature scaling.
//! * [`mirage`]: the region-restricted KL fine-tuning attack and its
//!   regression variant.
//! * [`region_widgets`]: analytic neuron assemblies that add a constant logit
//!   shift exactly inside an axis-aligned box.
//! * [`abstain`]: the max-softmax gate and abstention statistics.
//! * [`calibration`]: binning, ECE, per-bin verdicts, undersampling and the
//!   confidence-overlap metric.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod abstain;
pub mod calibration;
pub mod data;
pub mod error;
pub mod mirage;
pub mod nets;
pub mod region_widgets;
pub mod seed;

pub use error::{Error, Result};
