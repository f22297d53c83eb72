//! Operator surface for the selective-prediction audit toolkit: the
//! `abstain-audit` subcommands and the experiment recipes they share with the
//! acceptance suite.

pub mod app;
pub mod error;
pub mod recipes;

pub use app::run;
