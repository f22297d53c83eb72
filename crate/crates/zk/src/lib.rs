//! Zero-knowledge calibration audits over information-theoretic MACs.
//!
//! A prover holding a fixed-point classifier convinces a verifier that its
//! per-bin calibration error on a reference set stays under `α`, revealing
//! one bit. See [`audit::run_prover`] and [`audit::run_verifier`].

pub mod audit;
pub mod channel;
pub mod error;
pub mod field;
pub mod fixed;
pub mod gadgets;
pub mod itmac;
pub mod protocol;

pub use error::{Result, ZkError};
