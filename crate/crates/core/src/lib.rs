//! Twist-proper α-loss boosting.
//!
//! `losses` holds the pointwise theory (tilted estimates, untwisting α, KL
//! metrics), `links` the surrogate and pseudo-inverse link machinery, `trees`
//! the weighted regression-tree weak learner, `boosting` PILBoost and the
//! AdaBoost baseline, `twisters` the training-set corruptions, `adaptive`
//! the noise-rate / α₀ estimators, `data` ingestion and splits, and `harness`
//! the experiment runner behind the `untwist` CLI.

pub mod adaptive;
pub mod boosting;
pub mod data;
pub mod error;
pub mod harness;
pub mod links;
pub mod losses;
pub mod math;
pub mod trees;
pub mod twisters;

pub use error::{Error, Result};
