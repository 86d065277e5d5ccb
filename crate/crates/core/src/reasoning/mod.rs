//! Fast and Standard mode inference over the six-level hierarchy.
//!
//! Levels: 1 normal/abnormal, 2 lesion characteristics, 3 clinical
//! context, 4 diagnostic category, 5 disease identification, 6
//! confirmation. Levels 2-4 narrow the candidate set; 5 and 6 score the
//! surviving diseases.

mod diagnosis;
mod dialogue;
mod gate;
mod model;
mod render;
mod session;

use thiserror::Error;

use crate::fusion::FusionError;

pub use diagnosis::{
    diagnosis_from_distribution, run_fast, Certainty, CertaintyBands, Diagnosis, DiagnosticPath, PathStep,
    Ranked,
};
pub use dialogue::{
    run_standard, DialogueScript, Responder, ScriptError, ScriptTurn, ScriptedResponder, StandardRun,
};
pub use gate::{check_gate, Gate, GatingConfig, QuestionTemplates};
pub use model::{confirmation_distribution, head_input, level_distribution, level_mask, HierarchyModel};
pub use render::{render_fast, render_standard, render_transcript};
pub use session::{
    ClarificationRequest, Contender, Context, Finding, LevelRecord, QaPair, SessionState, SessionStatus,
    StepOutcome,
};

pub const LEVELS: usize = 6;

/// Output cardinality of each level head.
pub const LEVEL_ARITY: [usize; LEVELS] = [2, 8, 8, 10, 118, 118];

#[derive(Debug, Error)]
pub enum ReasoningError {
    #[error("level {0} is outside 1..=6")]
    LevelOutOfRange(u8),
    #[error("bad head shape: {0}")]
    HeadShape(String),
    #[error("embedding has dimension {found}, expected {expected}")]
    EmbeddingDim { expected: usize, found: usize },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("no candidate diseases remain at level {level}")]
    EmptyCandidates { level: u8 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("case text is empty")]
    EmptyCaseText,
    #[error("answer is empty")]
    EmptyAnswer,
    #[error("top_k must be at least 1")]
    ZeroTopK,
    #[error("session is finished")]
    Finished,
    #[error("a clarification is pending at level {0}")]
    ClarificationPending(u8),
    #[error("no clarification is pending")]
    NothingPending,
    #[error("cannot finalize at level {0}; level 6 has not been reached")]
    NotReady(u8),
    #[error("encoding failed: {0}")]
    Fusion(#[from] FusionError),
}
