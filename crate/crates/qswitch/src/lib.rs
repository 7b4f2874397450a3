//! Pipeline runner, instance registry, studies and file formats on top of
//! `qswitch-core`.

pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod registry;
pub mod study;
pub mod validate;

pub use config::{PartialConfig, Rounding, RunConfig};
pub use error::{AppError, AppResult};
pub use pipeline::{run_pipeline, RunReport};
