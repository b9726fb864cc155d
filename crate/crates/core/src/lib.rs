//! Magnetic-flux-leakage inspection toolkit: synthetic scans, the
//! scan-to-window preprocessing chain, augmentation, a small CNN engine and
//! the classifiers and metrics built on it.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // NaN-rejecting guards

pub mod augment;
pub mod error;
pub mod hashing;
pub mod models;
pub mod nn;
pub mod preprocess;
pub mod rng;
pub mod scan;
pub mod synth;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
