//! Glyph block segmentation pipeline.
//!
//! Annotation ingest and dataset manifests, a promptable segmenter with a
//! trainable mask decoder, prompt-free baselines, the training loop,
//! seeded evaluation and a synthetic corpus generator.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod modelzoo;
pub mod synthcorpus;
pub mod training;

pub use error::{Error, Result};
