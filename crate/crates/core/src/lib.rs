//! Turn-level behavior classification for dyadic conversations.
//!
//! This crate holds the pure algorithmic parts of the pipeline and builds
//! without `std` (it needs `alloc`):
//!
//! - [`labels`] and [`corpus`]: the behavior code taxonomy, the couple /
//!   session / turn data model, label merging and partitioning.
//! - [`align`]: word-timing based correction of annotated turn boundaries.
//! - [`features`]: turn-level functionals over frame descriptors and a hashed
//!   bag-of-words embedder.
//! - [`model`]: a dense ReLU network with softmax output, weighted
//!   cross-entropy, SGD/Adam and validation-UAR checkpoint selection.
//! - [`eval`]: confusion matrices, UAR, the prior-sampling chance baseline and
//!   tolerance-window scoring.
//! - [`grid`], [`folds`], [`crossval`]: hyperparameter grids,
//!   leave-one-couple-out fold planning and per-fold model selection.
//!
//! File formats, the synthetic corpus generator, parallel scheduling and the
//! command line live in the `turnclass` crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod align;
pub mod corpus;
pub mod crossval;
pub mod eval;
pub mod features;
pub mod folds;
pub mod grid;
pub mod labels;
pub mod matrix;
pub mod model;
pub mod seed;
pub mod text;

pub use labels::{BehaviorClass, BehaviorCode, ClassCounts};
pub use matrix::Matrix;
