//! File formats, run configuration and the command pipeline around
//! `storyline-core`.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod formats;
pub mod manifest;
pub mod pipeline;

pub use error::{Error, Result};
