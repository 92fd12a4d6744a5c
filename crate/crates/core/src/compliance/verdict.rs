use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Label;
use crate::nn::argmax;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    PotentialViolation,
    Supported,
    Inconclusive,
}

impl Verdict {
    pub const ALL: [Verdict; 3] = [Verdict::PotentialViolation, Verdict::Supported, Verdict::Inconclusive];

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::PotentialViolation => "potential_violation",
            Verdict::Supported => "supported",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Maps a `[contradiction, neutral, entailment]` distribution to a verdict:
/// a contradiction argmax with probability at least `threshold` is a
/// potential violation, an entailment argmax is supported, anything else is
/// inconclusive. Ties go to the earlier class.
pub fn verdict(probs: &[f64], threshold: f64) -> Result<Verdict> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    if probs.len() != 3 {
        return Err(Error::Data(format!("expected 3 probabilities, got {}", probs.len())));
    }
    let sum: f64 = probs.iter().sum();
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > 1e-4 {
        return Err(Error::Data(format!("not a probability distribution: {probs:?}")));
    }
    Ok(match Label::from_index(argmax(probs)).unwrap() {
        Label::Contradiction if probs[0] >= threshold => Verdict::PotentialViolation,
        Label::Entailment => Verdict::Supported,
        _ => Verdict::Inconclusive,
    })
}
