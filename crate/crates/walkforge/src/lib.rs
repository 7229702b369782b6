//! File formats, configuration, completion clients and the stage runner for
//! the walkforge pipeline. The algorithms live in `walkforge-core`.

pub mod config;
pub mod house;
pub mod io;
pub mod llm;
pub mod manifest;
pub mod pgm;
pub mod pipeline;
pub mod plot;
pub mod sidecar;

pub use walkforge_core as core;
