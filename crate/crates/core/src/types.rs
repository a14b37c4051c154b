use serde::{Deserialize, Serialize};

/// Speech transcript of one audio expression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
    pub confidence: f64,
}

impl Transcript {
    pub fn is_blank(&self) -> bool {
        self.text.trim().is_empty()
    }
}

/// Has-target verdict of the gate stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub has_target: bool,
    pub score: f64,
}

impl GateDecision {
    pub fn from_score(score: f64, threshold: f64) -> Self {
        Self {
            has_target: score >= threshold,
            score,
        }
    }

    pub fn is_consistent(&self, threshold: f64) -> bool {
        (0.0..=1.0).contains(&self.score) && self.has_target == (self.score >= threshold)
    }
}
