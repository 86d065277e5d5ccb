use serde::{Deserialize, Serialize};

use super::ReasoningError;
use crate::numeric::ranked;

/// Clarification prompts, one per level. `{first}` and `{second}` are
/// replaced by the two competing labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionTemplates(pub [String; 6]);

impl Default for QuestionTemplates {
    fn default() -> Self {
        QuestionTemplates([
            "Is there any visible change in colour, texture or contour of the oral tissue?".into(),
            "What are the main visual characteristics of this lesion?".into(),
            "Any significant history of medications?".into(),
            "How has the lesion behaved over time (onset, duration, growth, recurrence, pain)?".into(),
            "Which findings help distinguish {first} from {second}?".into(),
            "Are there confirmatory findings (biopsy, culture, response to treatment) supporting {first} over {second}?".into(),
        ])
    }
}

impl QuestionTemplates {
    pub fn render(&self, level: u8, first: &str, second: &str) -> String {
        self.0[level as usize - 1]
            .replace("{first}", first)
            .replace("{second}", second)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatingConfig {
    /// Minimum natural-log probability gap between the top two outputs
    /// for a level to pass without clarification. Zero disables gating.
    pub threshold: f64,
    pub max_clarifications_per_level: u32,
    #[serde(default)]
    pub questions: QuestionTemplates,
}

impl Default for GatingConfig {
    fn default() -> Self {
        GatingConfig {
            threshold: 0.3,
            max_clarifications_per_level: 2,
            questions: QuestionTemplates::default(),
        }
    }
}

impl GatingConfig {
    pub fn with_threshold(threshold: f64) -> Self {
        GatingConfig {
            threshold,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), ReasoningError> {
        if !self.threshold.is_finite() || self.threshold < 0.0 {
            return Err(ReasoningError::InvalidConfig(format!(
                "gating threshold must be a non-negative number, got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// Result of comparing the two most probable outputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    Pass {
        /// `None` when only one output has non-zero probability.
        gap: Option<f64>,
    },
    Uncertain {
        /// `(index, ln p)` of the top two outputs.
        first: (usize, f64),
        second: (usize, f64),
        gap: f64,
    },
}

impl Gate {
    pub fn passed(&self) -> bool {
        matches!(self, Gate::Pass { .. })
    }
}

/// Applies the log-probability gap rule to `dist`.
pub fn check_gate(dist: &[f64], config: &GatingConfig) -> Result<Gate, ReasoningError> {
    if dist.iter().any(|p| p.is_nan() || *p < 0.0) {
        return Err(ReasoningError::InvalidDistribution(
            "distribution has NaN or negative entries".into(),
        ));
    }
    if !dist.iter().any(|p| *p > 0.0) {
        return Err(ReasoningError::InvalidDistribution(
            "distribution has no mass".into(),
        ));
    }
    let order = ranked(dist);
    let (i1, i2) = (order[0], order.get(1).copied());
    let Some(i2) = i2.filter(|&i| dist[i] > 0.0) else {
        return Ok(Gate::Pass { gap: None });
    };
    let (l1, l2) = (dist[i1].ln(), dist[i2].ln());
    let gap = l1 - l2;
    if gap < config.threshold {
        Ok(Gate::Uncertain {
            first: (i1, l1),
            second: (i2, l2),
            gap,
        })
    } else {
        Ok(Gate::Pass { gap: Some(gap) })
    }
}
