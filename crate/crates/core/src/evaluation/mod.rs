//! Zone-stratified evaluation, mode comparison, printed-table checks and
//! the disease atlas.

mod atlas;
mod experiment;
mod published;
mod zones;

use thiserror::Error;

use crate::taxonomy::DiseaseId;

pub use atlas::{export_atlas, principal_axes, AtlasExport, AtlasPoint, Shape};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentResult};
pub use published::{render_reproduction, PublishedColumn, PublishedTable, ReproducedRow, PRINT_TOLERANCE};
pub use zones::{
    compare_modes, weighted_overall, zone_accuracy, zone_report, DeltaTable, Mode, ModeColumn,
    PredictionEntry, PredictionLog, ZoneCell, ZoneReport,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("nothing to evaluate")]
    Empty,
    #[error("zone case count must be positive, got {0}")]
    NonPositiveCount(u64),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown disease {0} in `{1}`")]
    UnknownDisease(DiseaseId, String),
    #[error("case `{0}`: zone does not match the taxonomy")]
    ZoneMismatch(String),
    #[error("log has no {0:?} predictions")]
    MissingMode(Mode),
    #[error("no column named `{0}`")]
    MissingColumn(String),
    #[error("mode `{0}` has no overall row")]
    MissingOverall(String),
    #[error("mode `{mode}`: overall n {overall} differs from zone total {zones}")]
    CountMismatch { mode: String, overall: u64, zones: u64 },
    #[error("atlas needs at least 3 diseases, got {0}")]
    AtlasTooSmall(usize),
    #[error("atlas embedding has dimension {found}, expected {expected}")]
    AtlasDimension { expected: usize, found: usize },
    #[error("non-finite value")]
    NonFinite,
    #[error(transparent)]
    Data(#[from] crate::datapipe::DataError),
    #[error(transparent)]
    Train(#[from] crate::trainer::TrainError),
    #[error(transparent)]
    Reasoning(#[from] crate::reasoning::ReasoningError),
    #[error(transparent)]
    Script(#[from] crate::reasoning::ScriptError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
