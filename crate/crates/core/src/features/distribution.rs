//! Outcome-token distribution features: unfiltered top-k, schema-filtered,
//! and log-odds margins.

use crate::error::{GateError, Result};
use crate::scalar::{compensated_sum, Scalar};
use crate::schema::{normalize_outcome_token, OutcomeLabel, TokenCandidate};

/// Renormalized top-k probabilities, sorted descending.
#[derive(Debug, Clone, PartialEq)]
pub struct TopKDistribution<T> {
    pub probs: Vec<T>,
}

impl<T: Scalar> TopKDistribution<T> {
    pub fn k(&self) -> usize {
        self.probs.len()
    }
}

/// Softmax over the given log-probabilities with a max shift.
pub fn renormalize_topk<T: Scalar>(logprobs: &[T]) -> Result<TopKDistribution<T>> {
    if logprobs.is_empty() {
        return Err(GateError::EmptyCandidates);
    }
    if logprobs.iter().any(|l| !l.is_finite()) {
        return Err(GateError::InvalidInput("non-finite log-probability".into()));
    }
    let max = logprobs
        .iter()
        .copied()
        .fold(T::NEG_INFINITY, |a, b| a.max(b));
    let weights: Vec<T> = logprobs.iter().map(|&l| (l - max).exp()).collect();
    let total = compensated_sum(weights.iter().copied());
    let mut probs: Vec<T> = weights.into_iter().map(|w| w / total).collect();
    probs.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    Ok(TopKDistribution { probs })
}

/// The eight statistics shared by the unfiltered and filtered families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistributionStats<T> {
    pub entropy: T,
    pub normalized_entropy: T,
    pub effective_choices: T,
    pub confidence: T,
    pub top1: T,
    pub top2_margin: T,
    pub top2_margin_normalized: T,
    pub top1_top2_ratio: T,
}

/// Base-2 entropy; zero-probability terms contribute nothing.
pub fn entropy_bits<T: Scalar>(probs: &[T]) -> T {
    let terms = probs
        .iter()
        .filter(|&&p| p > T::zero())
        .map(|&p| -p * p.log2());
    compensated_sum(terms).max(T::zero())
}

/// `probs` must be sorted descending; `k` is the support size used for normalization.
pub fn distribution_stats<T: Scalar>(probs: &[T], k: usize) -> DistributionStats<T> {
    let entropy = entropy_bits(probs);
    let normalized_entropy = if k <= 1 {
        T::zero()
    } else {
        entropy / T::from_count(k).log2()
    };
    let top1 = probs.first().copied().unwrap_or_else(T::zero);
    let top2 = probs.get(1).copied().unwrap_or_else(T::zero);
    let margin = top1 - top2;
    DistributionStats {
        entropy,
        normalized_entropy,
        effective_choices: entropy.exp2(),
        confidence: T::one() - normalized_entropy,
        top1,
        top2_margin: margin,
        top2_margin_normalized: margin / top1.max(T::EPS_GUARD),
        top1_top2_ratio: top1 / top2.max(T::EPS_GUARD),
    }
}

pub fn compute_topk_features<T: Scalar>(dist: &TopKDistribution<T>) -> DistributionStats<T> {
    distribution_stats(&dist.probs, dist.k())
}

/// Label set the filtered family renormalizes over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSupport {
    Binary,
    #[default]
    Expanded,
}

impl LabelSupport {
    pub fn labels(self) -> &'static [OutcomeLabel] {
        match self {
            LabelSupport::Binary => &OutcomeLabel::ALL[..2],
            LabelSupport::Expanded => &OutcomeLabel::ALL[..],
        }
    }
}

/// Token mass collapsed onto schema labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelDistribution<T> {
    pub support: LabelSupport,
    /// Unnormalized collapsed mass per label, aligned with `support.labels()`.
    pub mass: Vec<T>,
    /// Renormalized probabilities, aligned with `support.labels()`.
    pub probs: Vec<T>,
}

impl<T: Scalar> LabelDistribution<T> {
    pub fn prob(&self, label: OutcomeLabel) -> T {
        self.support
            .labels()
            .iter()
            .position(|&l| l == label)
            .map(|i| self.probs[i])
            .unwrap_or_else(T::zero)
    }

    pub fn sorted_probs(&self) -> Vec<T> {
        let mut p = self.probs.clone();
        p.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
        p
    }
}

pub fn collapse_to_labels<T: Scalar>(
    candidates: &[TokenCandidate],
    support: LabelSupport,
) -> Result<LabelDistribution<T>> {
    let labels = support.labels();
    let mut parts: Vec<Vec<T>> = vec![Vec::new(); labels.len()];
    for c in candidates {
        let Some(label) = normalize_outcome_token(&c.surface) else {
            continue;
        };
        if let Some(i) = labels.iter().position(|&l| l == label) {
            parts[i].push(T::lit(c.logprob).exp());
        }
    }
    let mass: Vec<T> = parts.into_iter().map(compensated_sum).collect();
    let total = compensated_sum(mass.iter().copied());
    if total <= T::zero() {
        return Err(GateError::NoLabelMass);
    }
    let probs = mass.iter().map(|&m| m / total).collect();
    Ok(LabelDistribution {
        support,
        mass,
        probs,
    })
}

pub fn compute_filtered_features<T: Scalar>(ldist: &LabelDistribution<T>) -> DistributionStats<T> {
    distribution_stats(&ldist.sorted_probs(), ldist.probs.len())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogOddsFeatures<T> {
    pub margin: T,
    pub margin_normalized: T,
    pub filtered_margin: T,
    pub filtered_margin_normalized: T,
    pub valid: bool,
    pub filtered_valid: bool,
}

/// `(l2 - l1, (l2 - l1) / min(l2, -eps))` for the two largest log-probabilities.
fn logodds_pair<T: Scalar>(mut logs: Vec<T>) -> Option<(T, T)> {
    if logs.len() < 2 {
        return None;
    }
    logs.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    let (l1, l2) = (logs[0], logs[1]);
    let diff = l2 - l1;
    Some((diff, diff / l2.min(-T::EPS_GUARD)))
}

pub fn compute_logodds_features<T: Scalar>(
    outcome_candidates: &[TokenCandidate],
    filtered: &LabelDistribution<T>,
) -> LogOddsFeatures<T> {
    let raw: Vec<T> = outcome_candidates
        .iter()
        .map(|c| T::lit(c.logprob))
        .collect();
    let filtered_logs: Vec<T> = filtered
        .mass
        .iter()
        .filter(|&&m| m > T::zero())
        .map(|&m| m.ln())
        .collect();
    let (margin, margin_normalized, valid) = match logodds_pair(raw) {
        Some((m, n)) => (m, n, true),
        None => (T::zero(), T::zero(), false),
    };
    let (filtered_margin, filtered_margin_normalized, filtered_valid) =
        match logodds_pair(filtered_logs) {
            Some((m, n)) => (m, n, true),
            None => (T::zero(), T::zero(), false),
        };
    LogOddsFeatures {
        margin,
        margin_normalized,
        filtered_margin,
        filtered_margin_normalized,
        valid,
        filtered_valid,
    }
}
