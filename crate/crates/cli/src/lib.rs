//! Batch pipeline for the serpentine arm experiments: simulate sessions,
//! train estimators, score them on held-out data and sweep window lengths.
//!
//! Every artifact records the hash of the configuration that produced it,
//! and later stages refuse artifacts whose hash does not match.

pub mod commands;
pub mod config;

pub use commands::{evaluate, generate, load_sessions, prepare, sweep, train};
pub use config::{ExperimentConfig, Profile};
