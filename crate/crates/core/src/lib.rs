//! Startup success prediction over time-windowed venture-funding data.
//!
//! The pipeline runs: [`ingest`] an export, cut it into [`windows`],
//! compute [`features`], rebalance with [`resample`], fit a model from
//! [`trees`] or [`learners`], then [`evaluate`], [`explain`] and build a
//! [`portfolio`]. [`synth`] generates a deterministic ecosystem with a
//! known ground truth for testing.

pub mod dataset;
pub mod dates;
pub mod error;
pub mod evaluate;
pub mod explain;
pub mod features;
pub mod ingest;
pub mod learners;
pub mod model;
pub mod portfolio;
pub mod resample;
pub mod study;
pub mod synth;
pub mod trees;
pub mod windows;

pub use dataset::Dataset;
pub use error::{Error, Result};
