//! File formats, experiment orchestration and persistence for few-shot
//! pattern classification. The algorithms themselves live in
//! [`fewshot_core`].

pub mod error;
pub mod formats;
pub mod model_io;
pub mod persist;
pub mod report;
pub mod runner;

pub use error::{Error, Result};
pub use fewshot_core as core;
