//! Fine-grained conditional probability estimation as bin-token regression.
//!
//! Scalar labels in `[0, 1]` become Gaussian-quantized distributions over `N`
//! equal-width bins; a small softmax head is trained against them with a
//! forward-KL objective plus an optional pairwise margin term, and decoded
//! either greedily (the coarse bin) or by expectation (the fine value).
//! Around that core sit multi-annotator fusion, pairwise skill-rating
//! aggregation, calibration metrics and structured-trace scoring.

pub mod bins;
pub mod cli;
pub mod config;
pub mod error;
pub mod fusion;
pub mod gradcheck;
pub mod head;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod rank;
pub mod registry;
pub mod structural;
pub mod train;

pub use error::{Error, Result};
