//! File formats, configuration and the batch pipeline behind the `segunc`
//! command. The numerical work lives in `segunc_core`.

mod error;

pub mod config;
pub mod flag;
pub mod manifest;
pub mod pipeline;
pub mod report;
pub mod volume;

pub use error::{Error, Result};
