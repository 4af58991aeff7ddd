//! File formats, click-log preprocessing, training, evaluation and the
//! ablation sweep around `sbr-core`. The `sbr` binary is a thin command
//! line over these modules.

pub mod ablate;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod parse;
pub mod preprocess;
pub mod store;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};
