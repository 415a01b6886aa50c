//! Class-imbalanced semi-supervised learning on vector data.
//!
//! The pipeline extends FixMatch-style pseudo-labeling with entropy-based
//! reweighting of hard examples, an embedding-alignment term for samples
//! below the confidence threshold, a class-balanced memory bank with
//! confidence decay whose prototypes refine pseudo-labels, and a second
//! classifier head trained with a prior-aware mask.
//!
//! Modules, bottom-up: [`numcore`], [`datagen`], [`model`], [`semi`],
//! [`trainer`], and the harness pieces [`config`], [`report`], [`cli`].

pub mod cli;
pub mod config;
pub mod datagen;
pub mod error;
pub mod model;
pub mod numcore;
pub mod report;
pub mod semi;
pub mod trainer;

pub use error::{Error, Result};
