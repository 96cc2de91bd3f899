//! File formats, run directories and orchestration around `gblend-core`.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod formats;
pub mod replay;
pub mod report;
pub mod run;
pub mod runner;
pub mod trace;

pub use error::{GblendError, Result};
