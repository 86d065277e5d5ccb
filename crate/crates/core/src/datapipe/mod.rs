//! Augmentation planning, stratified partitioning, manifests and the
//! synthetic corpus.

mod augment;
mod manifest;
mod partition;
mod synth;

use thiserror::Error;

use crate::taxonomy::DiseaseId;

pub use augment::{
    augmentation_factor, build_plan, read_counts_csv, target_count, write_counts_csv, AugConfig,
    AugmentationPlan, ClassCount, LogBase, PlanRow, DEFAULT_TRANSFORMS,
};
pub use manifest::{Manifest, ManifestEntry};
pub use partition::{largest_remainder, partition, PartitionResult, PartitionWarning, Ratios, Split};
pub use synth::{generate_synthetic_corpus, SynthParams, SyntheticCorpus};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("n_max must be positive")]
    ZeroMax,
    #[error("n_initial {n_initial} exceeds n_max {n_max}")]
    CountAboveMax { n_initial: u64, n_max: u64 },
    #[error("no class counts given")]
    EmptyCounts,
    #[error("every class count is zero")]
    AllZeroCounts,
    #[error("disease {0} appears more than once")]
    DuplicateClass(DiseaseId),
    #[error("duplicate case id `{0}`")]
    DuplicateCase(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("case `{case_id}`: {message}")]
    Entry { case_id: String, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("no controlled rounding exists for these class sizes")]
    Rounding,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Stream(#[from] std::io::Error),
}
