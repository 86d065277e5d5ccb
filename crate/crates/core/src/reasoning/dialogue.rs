//! Scripted clarification dialogues and the Standard Mode driver loop.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::session::{ClarificationRequest, Context, Finding, SessionState, SessionStatus, StepOutcome};
use super::ReasoningError;

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("cannot read dialogue script {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed dialogue script: {0}")]
    Parse(String),
    #[error("turn {turn} has an empty answer")]
    EmptyAnswer { turn: usize },
    #[error("turn {turn} expected a question containing {expected:?}, got {question:?}")]
    Mismatch {
        turn: usize,
        expected: String,
        question: String,
    },
    #[error(transparent)]
    Reasoning(#[from] ReasoningError),
}

/// One scripted answer. `expect` must appear (case-insensitively) in the
/// question it answers; an empty `expect` matches any question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptTurn {
    #[serde(default)]
    pub expect: String,
    pub answer: String,
}

/// Ordered answers for reproducible Standard Mode runs.
///
/// ```toml
/// [[turn]]
/// expect = "visual characteristics"
/// answer = "White reticular pattern"
/// ```
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueScript {
    #[serde(default, rename = "turn")]
    pub turns: Vec<ScriptTurn>,
}

impl DialogueScript {
    pub fn parse(text: &str) -> Result<Self, ScriptError> {
        let script: DialogueScript = toml::from_str(text).map_err(|e| ScriptError::Parse(e.to_string()))?;
        for (i, t) in script.turns.iter().enumerate() {
            if t.answer.trim().is_empty() {
                return Err(ScriptError::EmptyAnswer { turn: i + 1 });
            }
        }
        Ok(script)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScriptError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScriptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("script serialises")
    }
}

/// Supplies answers to clarification questions. `None` declines.
pub trait Responder {
    fn respond(&mut self, request: &ClarificationRequest) -> Result<Option<String>, ScriptError>;
}

impl<F> Responder for F
where
    F: FnMut(&ClarificationRequest) -> Option<String>,
{
    fn respond(&mut self, request: &ClarificationRequest) -> Result<Option<String>, ScriptError> {
        Ok(self(request))
    }
}

/// Answers from a [`DialogueScript`] in order.
///
/// Lenient mode (the default) answers each question with the next turn
/// whose `expect` matches, skipping turns for questions that never came
/// up, and declines when nothing matches. Strict mode requires the very
/// next turn to match.
#[derive(Debug, Clone)]
pub struct ScriptedResponder {
    script: DialogueScript,
    next: usize,
    strict: bool,
    skipped: usize,
}

impl ScriptedResponder {
    pub fn new(script: DialogueScript) -> Self {
        ScriptedResponder {
            script,
            next: 0,
            strict: false,
            skipped: 0,
        }
    }

    pub fn strict(script: DialogueScript) -> Self {
        ScriptedResponder {
            strict: true,
            ..Self::new(script)
        }
    }

    /// Turns consumed, answered or skipped.
    pub fn used(&self) -> usize {
        self.next
    }

    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn remaining(&self) -> usize {
        self.script.turns.len() - self.next
    }
}

fn matches(turn: &ScriptTurn, question: &str) -> bool {
    question.to_lowercase().contains(&turn.expect.to_lowercase())
}

impl Responder for ScriptedResponder {
    fn respond(&mut self, request: &ClarificationRequest) -> Result<Option<String>, ScriptError> {
        let Some(turn) = self.script.turns.get(self.next) else {
            return Ok(None);
        };
        if self.strict && !matches(turn, &request.question) {
            return Err(ScriptError::Mismatch {
                turn: self.next + 1,
                expected: turn.expect.clone(),
                question: request.question.clone(),
            });
        }
        let found = self.script.turns[self.next..]
            .iter()
            .position(|t| matches(t, &request.question));
        match found {
            Some(offset) => {
                self.skipped += offset;
                self.next += offset + 1;
                Ok(Some(self.script.turns[self.next - 1].answer.clone()))
            }
            None => Ok(None),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StandardRun {
    pub finding: Finding,
    pub outcomes: Vec<StepOutcome>,
    /// Questions declined by the responder.
    pub waived: usize,
}

/// Steps `session` to completion, routing questions to `responder`.
pub fn run_standard(
    ctx: &Context<'_>,
    session: &mut SessionState,
    responder: &mut dyn Responder,
    top_k: usize,
) -> Result<StandardRun, ScriptError> {
    let mut outcomes = Vec::new();
    let mut waived = 0;
    loop {
        match session.status {
            SessionStatus::Active => {}
            SessionStatus::Confirmed | SessionStatus::NormalFinding => {
                let finding = session.finalize(ctx, top_k)?;
                return Ok(StandardRun {
                    finding,
                    outcomes,
                    waived,
                });
            }
            SessionStatus::Finalized => return Err(ReasoningError::Finished.into()),
        }
        let outcome = session.step(ctx)?;
        if let StepOutcome::Clarify(request) = &outcome {
            match responder.respond(request)? {
                Some(answer) => session.answer(ctx, &answer)?,
                None => {
                    session.waive(ctx)?;
                    waived += 1;
                }
            }
        }
        outcomes.push(outcome);
    }
}
