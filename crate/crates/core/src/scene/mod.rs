//! Domain types, the scene document, and asset file IO.

mod config;
pub mod io;
mod types;

use std::path::PathBuf;

pub use config::*;
pub use types::*;

#[derive(Debug, thiserror::Error)]
pub enum SceneError {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("unknown elasticity category `{0}` (expected soft, medium or hard)")]
    UnknownCategory(String),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("cannot access {}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error("malformed {}: {message}", path.display())]
    Format { path: PathBuf, message: String },
}
