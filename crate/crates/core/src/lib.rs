//! Whole-body plethysmography analysis: EDF ingest, spike filtering,
//! breath segmentation, per-breath metrics, approximate entropy, group
//! comparisons and sigh analysis.

pub mod breath_metrics;
pub mod commands;
pub mod database;
pub mod entropy;
pub mod error;
pub mod pipeline;
pub mod preprocess;
pub mod reports;
pub mod segmentation;
pub mod sigh_analysis;
pub mod signal_io;
pub mod stats_compare;
pub mod synth;
