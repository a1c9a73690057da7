//! Orchestration behind the `xprojct` command: phantom datasets,
//! preprocessing, training, prediction, evaluation and timing.

pub mod benchmark;
pub mod data;
pub mod error;
pub mod evaluate;
pub mod phantom;
pub mod predict;
pub mod preprocess;
pub mod study;
pub mod train;

pub use error::{exit, CliError, Result};
