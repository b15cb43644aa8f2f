//! LLM performance predictor features, grouped into seven families that can be
//! toggled independently for ablation.

mod blackbox;
mod distribution;
mod sequence;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use blackbox::{
    compute_attribution_features, compute_verbalized_features, AttributionFeatures,
    VerbalizedFeatures,
};
pub use distribution::{
    collapse_to_labels, compute_filtered_features, compute_logodds_features, compute_topk_features,
    distribution_stats, entropy_bits, renormalize_topk, DistributionStats, LabelDistribution,
    LabelSupport, LogOddsFeatures, TopKDistribution,
};
pub use sequence::{compute_sequence_features, quantile_linear, SequenceStats, QUANTILE_LEVELS};

use crate::error::{GateError, Result};
use crate::scalar::Scalar;
use crate::schema::{ResponseTrace, TokenRecord};

/// Feature families in catalog order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    OutcomeTopK,
    FilteredOutcome,
    LogOddsMargin,
    SequenceCoT,
    TokenLevelCoT,
    Verbalized,
    Attribution,
}

impl Family {
    pub const ALL: [Family; 7] = [
        Family::OutcomeTopK,
        Family::FilteredOutcome,
        Family::LogOddsMargin,
        Family::SequenceCoT,
        Family::TokenLevelCoT,
        Family::Verbalized,
        Family::Attribution,
    ];

    /// Prefix used in fully-qualified feature names.
    pub fn prefix(self) -> &'static str {
        match self {
            Family::OutcomeTopK => "outcome_topk",
            Family::FilteredOutcome => "filtered_outcome",
            Family::LogOddsMargin => "logodds_margin",
            Family::SequenceCoT => "sequence_cot",
            Family::TokenLevelCoT => "token_level_cot",
            Family::Verbalized => "verbalized",
            Family::Attribution => "attribution",
        }
    }

    pub fn needs_logprobs(self) -> bool {
        !matches!(self, Family::Verbalized | Family::Attribution)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.prefix())
    }
}

impl FromStr for Family {
    type Err = GateError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        let family = match key.as_str() {
            "outcome_topk" | "topk" | "a" => Family::OutcomeTopK,
            "filtered_outcome" | "filtered" | "b" => Family::FilteredOutcome,
            "logodds_margin" | "logodds" | "c" => Family::LogOddsMargin,
            "sequence_cot" | "sequence" | "d" => Family::SequenceCoT,
            "token_level_cot" | "token_level" | "e" => Family::TokenLevelCoT,
            "verbalized" | "f" => Family::Verbalized,
            "attribution" | "g" => Family::Attribution,
            _ => {
                return Err(GateError::InvalidInput(format!(
                    "unknown feature family `{s}`"
                )))
            }
        };
        Ok(family)
    }
}

/// Set of enabled families; iteration follows catalog order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FamilySet(BTreeSet<Family>);

impl FamilySet {
    pub fn all() -> Self {
        Self(Family::ALL.into_iter().collect())
    }

    /// Families used for direct-answer runs: everything except the reasoning-span families.
    pub fn direct() -> Self {
        Self::all()
            .without(Family::SequenceCoT)
            .without(Family::TokenLevelCoT)
    }

    pub fn only(family: Family) -> Self {
        Self(BTreeSet::from([family]))
    }

    pub fn without(mut self, family: Family) -> Self {
        self.0.remove(&family);
        self
    }

    pub fn contains(&self, family: Family) -> bool {
        self.0.contains(&family)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Family> + '_ {
        self.0.iter().copied()
    }

    pub fn parse_list(list: &str) -> Result<Self> {
        list.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(str::parse)
            .collect::<Result<BTreeSet<_>>>()
            .map(Self)
    }
}

impl FromIterator<Family> for FamilySet {
    fn from_iter<I: IntoIterator<Item = Family>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEntry<T> {
    pub name: String,
    pub family: Family,
    pub value: T,
}

/// Named, family-tagged features for one item in fixed catalog order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector<T> {
    pub entries: Vec<FeatureEntry<T>>,
}

impl<T: Scalar> FeatureVector<T> {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.name.clone()).collect()
    }

    pub fn values(&self) -> Vec<T> {
        self.entries.iter().map(|e| e.value).collect()
    }

    pub fn get(&self, name: &str) -> Option<T> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .map(|e| e.value)
    }

    fn push(&mut self, family: Family, name: &str, value: T) {
        self.entries.push(FeatureEntry {
            name: format!("{}.{}", family.prefix(), name),
            family,
            value,
        });
    }

    fn push_flag(&mut self, family: Family, name: &str, flag: bool) {
        self.push(family, name, if flag { T::one() } else { T::zero() });
    }

    fn push_stats(&mut self, family: Family, s: &DistributionStats<T>, with_msp: bool) {
        self.push(family, "entropy", s.entropy);
        self.push(family, "normalized_entropy", s.normalized_entropy);
        self.push(family, "effective_choices", s.effective_choices);
        self.push(family, "confidence", s.confidence);
        if with_msp {
            self.push(family, "msp", s.top1);
        }
        self.push(family, "top2_margin", s.top2_margin);
        self.push(family, "top2_margin_normalized", s.top2_margin_normalized);
        self.push(family, "top1_top2_ratio", s.top1_top2_ratio);
    }
}

/// Fully-qualified names of the single-signal baseline features.
pub mod names {
    pub const MSP: &str = "outcome_topk.msp";
    pub const TOP2_MARGIN: &str = "outcome_topk.top2_margin";
    pub const ENTROPY: &str = "outcome_topk.entropy";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Candidates entering the unfiltered outcome distribution and per-token entropies.
    pub top_k: usize,
    pub support: LabelSupport,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            top_k: 5,
            support: LabelSupport::Expanded,
        }
    }
}

pub fn assemble_feature_vector<T: Scalar>(
    trace: &ResponseTrace,
    include: &FamilySet,
    cfg: &FeatureConfig,
) -> Result<FeatureVector<T>> {
    if include.is_empty() {
        return Err(GateError::EmptyFamilySet);
    }
    let needs_outcome = include.iter().any(|f| {
        matches!(
            f,
            Family::OutcomeTopK | Family::FilteredOutcome | Family::LogOddsMargin
        )
    });
    let outcome = if needs_outcome {
        if trace.logprobs_unavailable {
            return Err(GateError::GrayBoxUnavailable);
        }
        Some(
            trace
                .outcome_record()
                .ok_or(GateError::GrayBoxUnavailable)?,
        )
    } else {
        None
    };
    let label_dist: Option<LabelDistribution<T>> = match outcome {
        Some(rec)
            if include.contains(Family::FilteredOutcome)
                || include.contains(Family::LogOddsMargin) =>
        {
            Some(collapse_to_labels(&rec.candidates, cfg.support)?)
        }
        _ => None,
    };
    let reasoning: Vec<&TokenRecord> = trace.reasoning_records().collect();
    let seq = if include.contains(Family::SequenceCoT) || include.contains(Family::TokenLevelCoT) {
        Some(compute_sequence_features::<T>(&reasoning, cfg.top_k))
    } else {
        None
    };

    let mut fv = FeatureVector {
        entries: Vec::new(),
    };
    for family in include.iter() {
        match family {
            Family::OutcomeTopK => {
                let rec = outcome.expect("outcome record checked above");
                let lps: Vec<T> = rec
                    .candidates
                    .iter()
                    .take(cfg.top_k)
                    .map(|c| T::lit(c.logprob))
                    .collect();
                let stats = compute_topk_features(&renormalize_topk(&lps)?);
                fv.push_stats(family, &stats, true);
            }
            Family::FilteredOutcome => {
                let stats = compute_filtered_features(label_dist.as_ref().expect("collapsed"));
                fv.push_stats(family, &stats, false);
            }
            Family::LogOddsMargin => {
                let rec = outcome.expect("outcome record checked above");
                let lo = compute_logodds_features(
                    &rec.candidates,
                    label_dist.as_ref().expect("collapsed"),
                );
                fv.push(family, "margin", lo.margin);
                fv.push(family, "margin_normalized", lo.margin_normalized);
                fv.push(family, "filtered_margin", lo.filtered_margin);
                fv.push(
                    family,
                    "filtered_margin_normalized",
                    lo.filtered_margin_normalized,
                );
                fv.push_flag(family, "valid", lo.valid);
                fv.push_flag(family, "filtered_valid", lo.filtered_valid);
            }
            Family::SequenceCoT => {
                let s = seq.as_ref().expect("sequence stats computed");
                fv.push(family, "nll", s.nll);
                fv.push(family, "perplexity", s.perplexity);
                fv.push_flag(family, "present", s.present);
            }
            Family::TokenLevelCoT => {
                let s = seq.as_ref().expect("sequence stats computed");
                fv.push(family, "mean_entropy", s.mean_token_entropy_bits);
                for (q, v) in ["q0", "q25", "q50", "q75", "q100"]
                    .iter()
                    .zip(s.entropy_quantiles)
                {
                    fv.push(family, &format!("entropy_{q}"), v);
                }
                for (q, v) in ["q0", "q25", "q50", "q75", "q100"]
                    .iter()
                    .zip(s.prob_quantiles)
                {
                    fv.push(family, &format!("prob_{q}"), v);
                }
            }
            Family::Verbalized => {
                let v = compute_verbalized_features::<T>(&trace.structured);
                fv.push(family, "p_correct", v.p_correct);
                fv.push_flag(family, "p_correct_missing", v.p_correct_missing);
                for ((name, _), value) in blackbox::BAND_NAMES.iter().zip(v.band) {
                    fv.push(family, name, value);
                }
            }
            Family::Attribution => {
                let a = compute_attribution_features(trace.structured.outcome);
                fv.push_flag(family, "evidence_deficit", a.evidence_deficit);
                fv.push_flag(family, "policy_gap", a.policy_gap);
                fv.push_flag(family, "inconclusive", a.inconclusive);
            }
        }
    }
    if let Some(bad) = fv.entries.iter().find(|e| !e.value.is_finite()) {
        return Err(GateError::InvalidInput(format!(
            "non-finite feature {}",
            bad.name
        )));
    }
    Ok(fv)
}
