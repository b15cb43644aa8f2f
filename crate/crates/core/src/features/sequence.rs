//! Reasoning-span features (chain-of-thought traces only).

use super::distribution::{entropy_bits, renormalize_topk};
use crate::scalar::{compensated_sum, Scalar};
use crate::schema::TokenRecord;

pub const QUANTILE_LEVELS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceStats<T> {
    pub nll: T,
    pub perplexity: T,
    pub mean_token_entropy_bits: T,
    pub entropy_quantiles: [T; 5],
    pub prob_quantiles: [T; 5],
    pub present: bool,
}

impl<T: Scalar> SequenceStats<T> {
    pub fn absent() -> Self {
        Self {
            nll: T::zero(),
            perplexity: T::one(),
            mean_token_entropy_bits: T::zero(),
            entropy_quantiles: [T::zero(); 5],
            prob_quantiles: [T::zero(); 5],
            present: false,
        }
    }
}

/// Quantile with linear interpolation between closest ranks (position `q * (n - 1)`).
pub fn quantile_linear<T: Scalar>(sorted: &[T], q: T) -> T {
    match sorted.len() {
        0 => T::zero(),
        1 => sorted[0],
        n => {
            let pos = q * T::from_count(n - 1);
            let lo = pos.floor();
            let lo_idx = num_traits::ToPrimitive::to_usize(&lo)
                .unwrap_or(0)
                .min(n - 1);
            let hi_idx = (lo_idx + 1).min(n - 1);
            let frac = pos - lo;
            sorted[lo_idx] + (sorted[hi_idx] - sorted[lo_idx]) * frac
        }
    }
}

fn quantiles<T: Scalar>(mut values: Vec<T>) -> [T; 5] {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    QUANTILE_LEVELS.map(|q| quantile_linear(&values, T::lit(q)))
}

/// `top_k` bounds how many candidates enter each per-token entropy.
pub fn compute_sequence_features<T: Scalar>(
    reasoning: &[&TokenRecord],
    top_k: usize,
) -> SequenceStats<T> {
    if reasoning.is_empty() {
        return SequenceStats::absent();
    }
    let chosen: Vec<T> = reasoning.iter().map(|r| T::lit(r.chosen.logprob)).collect();
    let nll = -compensated_sum(chosen.iter().copied());
    let perplexity = (nll / T::from_count(chosen.len())).exp();

    let entropies: Vec<T> = reasoning
        .iter()
        .map(|r| {
            let lps: Vec<T> = r
                .candidates
                .iter()
                .take(top_k)
                .map(|c| T::lit(c.logprob))
                .collect();
            renormalize_topk(&lps)
                .map(|d| entropy_bits(&d.probs))
                .unwrap_or_else(|_| T::zero())
        })
        .collect();
    let mean_token_entropy_bits =
        compensated_sum(entropies.iter().copied()) / T::from_count(entropies.len());

    SequenceStats {
        nll,
        perplexity,
        mean_token_entropy_bits,
        entropy_quantiles: quantiles(entropies),
        prob_quantiles: quantiles(chosen.iter().map(|l| l.exp()).collect()),
        present: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{Span, TokenCandidate};
    use approx::assert_abs_diff_eq;

    fn rec(lp: f64, others: &[f64]) -> TokenRecord {
        let mut cands: Vec<TokenCandidate> = others
            .iter()
            .enumerate()
            .map(|(i, &l)| TokenCandidate::new(format!("t{i}"), l))
            .collect();
        cands.push(TokenCandidate::new("chosen", lp));
        TokenRecord::new(Span::Reasoning, TokenCandidate::new("chosen", lp), cands).unwrap()
    }

    #[test]
    fn uniform_half_tokens() {
        let half = 0.5f64.ln();
        let recs: Vec<TokenRecord> = (0..4).map(|_| rec(half, &[half])).collect();
        let refs: Vec<&TokenRecord> = recs.iter().collect();
        let s: SequenceStats<f64> = compute_sequence_features(&refs, 5);
        assert_abs_diff_eq!(s.nll, 4.0 * 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(s.perplexity, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.mean_token_entropy_bits, 1.0, epsilon = 1e-12);
        assert!(s.present);
    }

    #[test]
    fn exact_rank_quantiles() {
        let h = [0.0, 1.0, 2.0, 3.0, 4.0];
        let q = QUANTILE_LEVELS.map(|q| quantile_linear(&h, q));
        assert_eq!(q, [0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_abs_diff_eq!(quantile_linear(&[0.0, 1.0], 0.25), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn empty_span_is_flagged_absent() {
        let s: SequenceStats<f64> = compute_sequence_features(&[], 5);
        assert!(!s.present);
        assert_eq!(s.perplexity, 1.0);
        assert_eq!(s.nll, 0.0);
    }

    #[test]
    fn quantiles_non_decreasing_and_ppl_at_least_one() {
        let recs: Vec<TokenRecord> = [-0.1, -2.0, -0.5, -3.2, -0.01]
            .iter()
            .map(|&l| rec(l, &[-1.0, -4.0]))
            .collect();
        let refs: Vec<&TokenRecord> = recs.iter().collect();
        let s: SequenceStats<f64> = compute_sequence_features(&refs, 5);
        assert!(s.entropy_quantiles.windows(2).all(|w| w[0] <= w[1]));
        assert!(s.prob_quantiles.windows(2).all(|w| w[0] <= w[1]));
        assert!(s.perplexity >= 1.0);
        assert_abs_diff_eq!(s.perplexity, (s.nll / 5.0).exp(), epsilon = 1e-12);
    }
}
