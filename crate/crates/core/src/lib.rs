pub mod assembly;
pub mod compat;
pub mod error;
pub mod ingest;
pub mod lpsolve;
pub mod metrics;
pub mod pipeline;
pub mod postprocess;
pub mod puzzle;

pub use error::{Error, Result};
