//! Features read from the structured text alone.

use crate::scalar::Scalar;
use crate::schema::{ConfidenceBand, OutcomeLabel, StructuredResponse};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerbalizedFeatures<T> {
    pub p_correct: T,
    pub p_correct_missing: bool,
    pub band: [T; 5],
}

/// Missing confidence is imputed at 0.5 with a missing flag.
pub fn compute_verbalized_features<T: Scalar>(s: &StructuredResponse) -> VerbalizedFeatures<T> {
    let (p_correct, p_correct_missing) = match s.p_correct {
        Some(p) => (T::from_count(p as usize) / T::lit(100.0), false),
        None => (T::lit(0.5), true),
    };
    let mut band = [T::zero(); 5];
    if let Some(b) = s.band {
        band[b.index()] = T::one();
    }
    VerbalizedFeatures {
        p_correct,
        p_correct_missing,
        band,
    }
}

pub const BAND_NAMES: [(&str, ConfidenceBand); 5] = [
    ("band_vl", ConfidenceBand::VL),
    ("band_l", ConfidenceBand::L),
    ("band_m", ConfidenceBand::M),
    ("band_h", ConfidenceBand::H),
    ("band_vh", ConfidenceBand::VH),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttributionFeatures {
    pub evidence_deficit: bool,
    pub policy_gap: bool,
    pub inconclusive: bool,
}

pub fn compute_attribution_features(outcome: OutcomeLabel) -> AttributionFeatures {
    AttributionFeatures {
        evidence_deficit: outcome == OutcomeLabel::InconclusiveEvidence,
        policy_gap: outcome == OutcomeLabel::InconclusiveDefinition,
        inconclusive: outcome.is_abstention(),
    }
}
