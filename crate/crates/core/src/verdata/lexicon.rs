use serde::{Deserialize, Serialize};

use super::Polarity;

/// Inference signature used to assign rule-based labels to synthetic data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Signature {
    /// Complement holds under both polarities.
    Factive,
    /// Complement holds iff the matrix clause is positive.
    Implicative,
    Neutral,
}

const FACTIVES: &[&str] = &[
    "acknowledge", "admit", "appreciate", "deplore", "discover", "find", "forget", "hate",
    "know", "lament", "learn", "mind", "note", "notice", "observe", "realize", "recall",
    "recognize", "regret", "remember", "resent", "reveal", "see", "understand",
];

const IMPLICATIVES: &[&str] = &[
    "bother", "condescend", "dare", "deign", "get", "happen", "manage", "succeed", "venture",
];

pub const FACTIVE_LABEL: f64 = 2.5;

pub fn signature_of(lemma: &str) -> Signature {
    if FACTIVES.binary_search(&lemma).is_ok() {
        Signature::Factive
    } else if IMPLICATIVES.binary_search(&lemma).is_ok() {
        Signature::Implicative
    } else {
        Signature::Neutral
    }
}

/// Factive: +2.5 under both polarities. Implicative: +2.5 positive, -2.5
/// negative. Neutral: 0.
pub fn rule_label(signature: Signature, polarity: Polarity) -> f64 {
    match signature {
        Signature::Factive => FACTIVE_LABEL,
        Signature::Implicative => FACTIVE_LABEL * polarity.code(),
        Signature::Neutral => 0.0,
    }
}
