//! File formats, synthetic corpora, the alignment and feature pipeline, and
//! the cross-validation runner built on `turnclass-core`.

pub use turnclass_core as core;

pub mod cli;
pub mod io;
pub mod pipeline;
pub mod recipe;
pub mod runner;
pub mod synth;
