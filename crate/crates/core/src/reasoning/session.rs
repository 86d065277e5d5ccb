use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::diagnosis::{
    diagnosis_from_distribution, Certainty, CertaintyBands, Diagnosis, DiagnosticPath, PathStep,
};
use super::gate::{check_gate, Gate, GatingConfig};
use super::model::{confirmation_distribution, level_distribution, HierarchyModel};
use super::{ReasoningError, LEVELS};
use crate::fusion::{embed_case, CaseFuser, EncoderBackend, IMAGE_DIM};
use crate::numeric::ranked;
use crate::taxonomy::{DiseaseId, Taxonomy, NORMAL};

/// Everything a session needs besides its own state.
#[derive(Clone, Copy)]
pub struct Context<'a> {
    pub taxonomy: &'a Taxonomy,
    pub model: &'a HierarchyModel,
    pub backend: &'a dyn EncoderBackend,
    pub fuser: &'a dyn CaseFuser,
    pub gating: &'a GatingConfig,
    pub bands: CertaintyBands,
}

impl Context<'_> {
    /// Key and display text of output `index` at `level`.
    pub fn label(&self, level: u8, index: usize) -> (String, String) {
        match level {
            1..=4 => {
                let l = &self.taxonomy.schema().labels(level as usize)[index];
                (l.key.clone(), l.display.clone())
            }
            _ => {
                let id = DiseaseId::from_index(index);
                let name = self.taxonomy.get(id).map(|d| d.name.clone()).unwrap_or_default();
                (id.to_string(), name)
            }
        }
    }

    fn path_step(&self, level: u8, index: usize) -> PathStep {
        let (key, display) = self.label(level, index);
        PathStep { level, key, display }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contender {
    pub key: String,
    pub display: String,
    pub log_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClarificationRequest {
    pub level: u8,
    pub question: String,
    pub top_two: [Contender; 2],
    /// `log_prob` of the first minus that of the second.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub level: u8,
    pub question: String,
    pub answer: String,
}

/// A distribution computed while stepping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub level: u8,
    pub distribution: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    /// Levels remain to be stepped.
    Active,
    /// Level 6 passed; ready to finalize.
    Confirmed,
    /// Level 1 chose "normal"; no disease work-up.
    NormalFinding,
    Finalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Finding {
    Normal {
        percent: f64,
        certainty: Certainty,
        path: DiagnosticPath,
    },
    Disease(Diagnosis),
}

/// One interactive Standard Mode diagnosis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub case_text: String,
    pub image_features: Vec<f64>,
    pub embedding: Vec<f64>,
    pub current_level: u8,
    pub path: DiagnosticPath,
    pub candidates: BTreeSet<DiseaseId>,
    pub pending: Option<ClarificationRequest>,
    pub transcript: Vec<QaPair>,
    pub prob_history: Vec<LevelRecord>,
    /// Clarifications consumed per level.
    pub clarifications: [u32; LEVELS],
    pub status: SessionStatus,
    pub confirmation: Option<DiseaseId>,
    pub result: Option<Finding>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum StepOutcome {
    /// A label was chosen at `level` (1-5).
    Advanced {
        level: u8,
        choice: PathStep,
        candidates_remaining: usize,
        gap: Option<f64>,
        /// True when the gate failed but the clarification budget was spent.
        forced: bool,
    },
    Clarify(ClarificationRequest),
    /// Level 6 passed.
    Confirmed {
        choice: PathStep,
        gap: Option<f64>,
        forced: bool,
    },
    NormalFinding {
        percent: f64,
    },
}

impl SessionState {
    /// Creates a session with a fresh random id.
    pub fn start(ctx: &Context<'_>, case_text: &str, image_features: &[f64]) -> Result<Self, ReasoningError> {
        Self::start_with_id(ctx, uuid::Uuid::new_v4().to_string(), case_text, image_features)
    }

    pub fn start_with_id(
        ctx: &Context<'_>,
        session_id: String,
        case_text: &str,
        image_features: &[f64],
    ) -> Result<Self, ReasoningError> {
        if case_text.trim().is_empty() {
            return Err(ReasoningError::EmptyCaseText);
        }
        if image_features.len() != IMAGE_DIM {
            return Err(crate::fusion::FusionError::Dimension {
                stage: "image_features".into(),
                expected: IMAGE_DIM,
                found: image_features.len(),
            }
            .into());
        }
        ctx.gating.validate()?;
        let embedding = embed_case(ctx.backend, ctx.fuser, case_text, image_features)?;
        Ok(SessionState {
            session_id,
            case_text: case_text.to_string(),
            image_features: image_features.to_vec(),
            embedding: embedding.into_inner(),
            current_level: 1,
            path: DiagnosticPath::default(),
            candidates: ctx.taxonomy.all_ids(),
            pending: None,
            transcript: Vec::new(),
            prob_history: Vec::new(),
            clarifications: [0; LEVELS],
            status: SessionStatus::Active,
            confirmation: None,
            result: None,
        })
    }

    /// Case text followed by every clarification answer, one per line.
    pub fn encoding_text(&self) -> String {
        let mut text = self.case_text.clone();
        for qa in &self.transcript {
            text.push('\n');
            text.push_str(&qa.answer);
        }
        text
    }

    pub fn is_finished(&self) -> bool {
        matches!(
            self.status,
            SessionStatus::Finalized | SessionStatus::NormalFinding
        )
    }

    /// Distribution of the current level under the current embedding.
    pub fn current_distribution(&self, ctx: &Context<'_>) -> Result<Vec<f64>, ReasoningError> {
        if self.current_level == 6 {
            confirmation_distribution(ctx.model, &self.embedding, &self.candidates, ctx.taxonomy)
        } else {
            level_distribution(
                ctx.model,
                &self.embedding,
                self.current_level,
                &self.candidates,
                ctx.taxonomy,
            )
        }
    }

    /// Evaluates the current level once.
    pub fn step(&mut self, ctx: &Context<'_>) -> Result<StepOutcome, ReasoningError> {
        if self.status != SessionStatus::Active {
            return Err(ReasoningError::Finished);
        }
        if let Some(p) = &self.pending {
            return Err(ReasoningError::ClarificationPending(p.level));
        }
        let level = self.current_level;
        let dist = self.current_distribution(ctx)?;
        let gate = check_gate(&dist, ctx.gating)?;
        self.prob_history.push(LevelRecord {
            level,
            distribution: dist.clone(),
        });

        let budget_left = self.clarifications[level as usize - 1] < ctx.gating.max_clarifications_per_level;
        if let Gate::Uncertain { first, second, gap } = gate {
            if budget_left {
                let c1 = ctx.label(level, first.0);
                let c2 = ctx.label(level, second.0);
                let request = ClarificationRequest {
                    level,
                    question: ctx.gating.questions.render(level, &c1.1, &c2.1),
                    top_two: [
                        Contender {
                            key: c1.0,
                            display: c1.1,
                            log_prob: first.1,
                        },
                        Contender {
                            key: c2.0,
                            display: c2.1,
                            log_prob: second.1,
                        },
                    ],
                    gap,
                };
                self.pending = Some(request.clone());
                return Ok(StepOutcome::Clarify(request));
            }
        }
        let forced = !gate.passed();
        let gap = match gate {
            Gate::Pass { gap } => gap,
            Gate::Uncertain { gap, .. } => Some(gap),
        };
        let choice = ranked(&dist)[0];
        let step = ctx.path_step(level, choice);

        match level {
            1 => {
                self.path.0.push(step.clone());
                if step.key == NORMAL {
                    let percent = dist[choice] * 100.0;
                    self.candidates.clear();
                    self.status = SessionStatus::NormalFinding;
                    self.result = Some(Finding::Normal {
                        percent,
                        certainty: ctx.bands.classify(percent),
                        path: self.path.clone(),
                    });
                    return Ok(StepOutcome::NormalFinding { percent });
                }
                self.current_level = 2;
            }
            2..=4 => {
                let taxonomy = ctx.taxonomy;
                self.candidates
                    .retain(|&id| taxonomy.carries(id, level as usize, choice));
                if self.candidates.is_empty() {
                    return Err(ReasoningError::EmptyCandidates { level });
                }
                self.path.0.push(step.clone());
                self.current_level += 1;
            }
            5 => {
                self.path.0.push(step.clone());
                self.current_level = 6;
            }
            _ => {
                self.confirmation = Some(DiseaseId::from_index(choice));
                self.status = SessionStatus::Confirmed;
                return Ok(StepOutcome::Confirmed {
                    choice: step,
                    gap,
                    forced,
                });
            }
        }
        Ok(StepOutcome::Advanced {
            level,
            choice: step,
            candidates_remaining: self.candidates.len(),
            gap,
            forced,
        })
    }

    /// Records an answer to the pending question and re-encodes the case
    /// with it.
    pub fn answer(&mut self, ctx: &Context<'_>, answer: &str) -> Result<(), ReasoningError> {
        let Some(pending) = &self.pending else {
            return Err(ReasoningError::NothingPending);
        };
        if answer.trim().is_empty() {
            return Err(ReasoningError::EmptyAnswer);
        }
        let level = pending.level;
        self.transcript.push(QaPair {
            level,
            question: pending.question.clone(),
            answer: answer.trim().to_string(),
        });
        let embedding = embed_case(
            ctx.backend,
            ctx.fuser,
            &self.encoding_text(),
            &self.image_features,
        )?;
        self.embedding = embedding.into_inner();
        self.pending = None;
        self.clarifications[level as usize - 1] += 1;
        Ok(())
    }

    /// Declines the pending question; the level then proceeds with its
    /// most probable output.
    pub fn waive(&mut self, ctx: &Context<'_>) -> Result<(), ReasoningError> {
        let Some(pending) = self.pending.take() else {
            return Err(ReasoningError::NothingPending);
        };
        let used = &mut self.clarifications[pending.level as usize - 1];
        *used = (*used).max(ctx.gating.max_clarifications_per_level);
        Ok(())
    }

    /// Produces the final result. Level 6 must have been reached; if it
    /// has not been stepped, the confirmation scores are used ungated.
    pub fn finalize(&mut self, ctx: &Context<'_>, top_k: usize) -> Result<Finding, ReasoningError> {
        match self.status {
            SessionStatus::Finalized => return Err(ReasoningError::Finished),
            SessionStatus::NormalFinding => {
                let result = self.result.clone().expect("normal finding carries a result");
                self.status = SessionStatus::Finalized;
                return Ok(result);
            }
            SessionStatus::Active | SessionStatus::Confirmed => {}
        }
        if let Some(p) = &self.pending {
            return Err(ReasoningError::ClarificationPending(p.level));
        }
        if self.current_level < 6 {
            return Err(ReasoningError::NotReady(self.current_level));
        }
        let dist = confirmation_distribution(ctx.model, &self.embedding, &self.candidates, ctx.taxonomy)?;
        let diagnosis =
            diagnosis_from_distribution(&dist, ctx.taxonomy, top_k, &ctx.bands, Some(self.path.clone()))?;
        let finding = Finding::Disease(diagnosis);
        self.result = Some(finding.clone());
        self.status = SessionStatus::Finalized;
        Ok(finding)
    }
}
