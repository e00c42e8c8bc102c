//! End-to-end experiment: synthetic data, baseline / MSR / resampled
//! training, decoding over a width × normalization grid, and reports.

mod config;
mod pipeline;
mod report;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{config_hash, AnalysisSection, ExperimentConfig, MsrSection, SearchSection, System};
pub use pipeline::{
    run_experiment, Artifacts, BucketEntry, CategoryEntry, CorpusSet, CurvePoint, ExperimentManifest, ExperimentOutcome,
    SystemSpec,
};
pub use report::{buckets_csv, compare_buckets, tagged_csv, tagged_json, BucketComparison};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error("stage {stage} failed: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
