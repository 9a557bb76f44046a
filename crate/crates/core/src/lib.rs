//! Multiresolution time series forecasting: synthetic data, curation,
//! deduplication, a patch-based decoder-only forecaster, training, decoding
//! and evaluation.

pub mod cli;
pub mod curate;
pub mod dataops;
pub mod decode;
pub mod dedup;
pub mod error;
pub mod eval;
pub mod io;
pub mod manifest;
pub mod model;
pub mod plot;
pub mod series;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
