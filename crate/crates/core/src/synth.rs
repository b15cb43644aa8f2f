//! Synthetic response traces with known correctness.
//!
//! Each item draws `z ~ Bernoulli(1 - error_rate)`. Outcome-token
//! distributions come from one of two Dirichlet regimes, peaked or flat; a
//! per-family signal strength sets how often the regime follows `z` rather
//! than being drawn independently of it. Abstentions are drawn among the
//! incorrect items and always emit a confident `2`/`3` token, so only the
//! attribution flags reveal them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{label_correctness, GroundTruth};
use crate::error::{GateError, Result};
use crate::io::LabelRow;
use crate::schema::{
    ConfidenceBand, OutcomeLabel, ReasoningStep, ResponseTrace, Span, StructuredResponse,
    TokenCandidate, TokenRecord, COT_STEPS,
};

/// Probability that a family's draw follows correctness instead of noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub outcome: f64,
    pub verbalized: f64,
    pub reasoning: f64,
}

impl SignalSpec {
    pub fn none() -> Self {
        Self {
            outcome: 0.0,
            verbalized: 0.0,
            reasoning: 0.0,
        }
    }

    pub fn msp_only() -> Self {
        Self {
            outcome: 1.0,
            verbalized: 0.0,
            reasoning: 0.0,
        }
    }

    /// Moderate outcome-distribution signal; abstentions carry the rest.
    pub fn complementary() -> Self {
        Self {
            outcome: 0.6,
            verbalized: 0.2,
            reasoning: 0.3,
        }
    }
}

impl Default for SignalSpec {
    fn default() -> Self {
        Self::complementary()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_items: usize,
    pub error_rate: f64,
    /// Share of all items that abstain; must not exceed `error_rate`.
    pub abstention_rate: f64,
    pub violating_rate: f64,
    pub signal: SignalSpec,
    /// Tokens per reasoning step; zero produces direct-answer traces.
    pub reasoning_tokens_per_step: usize,
    pub emit_verbalized: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_items: 3000,
            error_rate: 0.15,
            abstention_rate: 0.03,
            violating_rate: 0.5,
            signal: SignalSpec::default(),
            reasoning_tokens_per_step: 0,
            emit_verbalized: true,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let s = &self.signal;
        if !(unit(self.error_rate) && unit(self.abstention_rate) && unit(self.violating_rate)) {
            return Err(GateError::InvalidInput(
                "synthetic rates must lie in [0, 1]".into(),
            ));
        }
        if !(unit(s.outcome) && unit(s.verbalized) && unit(s.reasoning)) {
            return Err(GateError::InvalidInput(
                "signal strengths must lie in [0, 1]".into(),
            ));
        }
        if self.abstention_rate > self.error_rate {
            return Err(GateError::InvalidInput(
                "abstention rate cannot exceed the error rate".into(),
            ));
        }
        Ok(())
    }
}

const HEAD_SURFACES: [&str; 8] = ["0", "1", "2", "3", " 0", " 1", "Yes", "No"];
const TAIL_TOKENS: usize = 12;
const PEAKED_ALPHA: (f64, f64) = (30.0, 0.6);
const FLAT_ALPHA: (f64, f64) = (4.0, 1.5);

fn band_for(p: u8) -> ConfidenceBand {
    match p {
        0..=19 => ConfidenceBand::VL,
        20..=39 => ConfidenceBand::L,
        40..=59 => ConfidenceBand::M,
        60..=79 => ConfidenceBand::H,
        _ => ConfidenceBand::VH,
    }
}

fn dirichlet(rng: &mut ChaCha8Rng, alphas: &[f64]) -> Vec<f64> {
    let draws: Vec<f64> = alphas
        .iter()
        .map(|&a| {
            Gamma::new(a, 1.0)
                .expect("positive shape")
                .sample(rng)
                .max(1e-300)
        })
        .collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / total).collect()
}

fn outcome_record(rng: &mut ChaCha8Rng, outcome: OutcomeLabel, peaked: bool) -> TokenRecord {
    let slot = outcome.code() as usize;
    let (main, rest) = if peaked { PEAKED_ALPHA } else { FLAT_ALPHA };
    let alphas: Vec<f64> = (0..HEAD_SURFACES.len())
        .map(|i| if i == slot { main } else { rest })
        .collect();
    let mut head = dirichlet(rng, &alphas);
    let argmax = (0..head.len()).fold(0, |m, i| if head[i] > head[m] { i } else { m });
    head.swap(slot, argmax);

    let tail: Vec<f64> = (0..TAIL_TOKENS)
        .map(|j| 1e-4 * 0.7f64.powi(j as i32))
        .collect();
    let head_scale = 1.0 - tail.iter().sum::<f64>();
    let mut cands: Vec<TokenCandidate> = HEAD_SURFACES
        .iter()
        .zip(&head)
        .map(|(s, p)| TokenCandidate::new(*s, (p * head_scale).ln()))
        .collect();
    cands.extend(
        tail.iter()
            .enumerate()
            .map(|(j, p)| TokenCandidate::new(format!("tok{j}"), p.ln())),
    );
    let chosen = cands[slot].clone();
    TokenRecord::new(Span::Outcome, chosen, cands).expect("synthetic logprobs are valid")
}

fn reasoning_record(rng: &mut ChaCha8Rng, index: usize, confident: bool) -> TokenRecord {
    let (a, b) = if confident { (8.0, 1.2) } else { (2.0, 2.0) };
    let p = Beta::<f64>::new(a, b)
        .expect("valid beta")
        .sample(rng)
        .clamp(1e-6, 1.0 - 1e-6);
    let others = dirichlet(rng, &[1.0; 4]);
    let chosen = TokenCandidate::new(format!("w{index}"), p.ln());
    let mut cands = vec![chosen.clone()];
    cands.extend(others.iter().enumerate().map(|(j, q)| {
        TokenCandidate::new(format!("alt{index}_{j}"), ((1.0 - p) * q).max(1e-300).ln())
    }));
    TokenRecord::new(Span::Reasoning, chosen, cands).expect("synthetic logprobs are valid")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub traces: Vec<ResponseTrace>,
    pub labels: Vec<LabelRow>,
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let abstain_given_error = if cfg.error_rate > 0.0 {
        cfg.abstention_rate / cfg.error_rate
    } else {
        0.0
    };
    let width = cfg.n_items.max(1).to_string().len().max(5);
    let noise = Normal::new(0.0, 10.0).expect("valid normal");

    let mut traces = Vec::with_capacity(cfg.n_items);
    let mut labels = Vec::with_capacity(cfg.n_items);
    for i in 0..cfg.n_items {
        let item_id = format!("item-{i:0width$}");
        let z = rng.random_bool(1.0 - cfg.error_rate);
        let truth = if rng.random_bool(cfg.violating_rate) {
            GroundTruth::Violating
        } else {
            GroundTruth::NonViolating
        };
        let abstains = !z && rng.random_bool(abstain_given_error.min(1.0));
        let outcome = match (z, abstains, truth) {
            (_, true, _) => {
                if rng.random_bool(0.5) {
                    OutcomeLabel::InconclusiveEvidence
                } else {
                    OutcomeLabel::InconclusiveDefinition
                }
            }
            (true, _, GroundTruth::Violating) | (false, _, GroundTruth::NonViolating) => {
                OutcomeLabel::Yes
            }
            _ => OutcomeLabel::No,
        };
        debug_assert_eq!(label_correctness(outcome, truth), z);

        let follows = |rng: &mut ChaCha8Rng, strength: f64| -> bool {
            if rng.random_bool(strength) {
                z
            } else {
                rng.random_bool(1.0 - cfg.error_rate)
            }
        };
        let peaked = abstains || follows(&mut rng, cfg.signal.outcome);
        let mut tokens = vec![outcome_record(&mut rng, outcome, peaked)];

        let mut steps = Vec::new();
        if cfg.reasoning_tokens_per_step > 0 {
            for step in 0..COT_STEPS {
                steps.push(ReasoningStep {
                    step_number: step as u32 + 1,
                    description: format!("Synthetic reasoning step {}", step + 1),
                });
                for t in 0..cfg.reasoning_tokens_per_step {
                    let confident = follows(&mut rng, cfg.signal.reasoning);
                    tokens.push(reasoning_record(
                        &mut rng,
                        step * cfg.reasoning_tokens_per_step + t,
                        confident,
                    ));
                }
            }
        }

        let (p_correct, band) = if cfg.emit_verbalized {
            let center = if follows(&mut rng, cfg.signal.verbalized) {
                88.0
            } else {
                62.0
            };
            let raw: f64 = center + noise.sample(&mut rng);
            let snapped = ((raw.clamp(0.0, 100.0) / 5.0).round() * 5.0) as u8;
            (Some(snapped), Some(band_for(snapped)))
        } else {
            (None, None)
        };

        traces.push(ResponseTrace {
            item_id: item_id.clone(),
            attempt: 1,
            structured: StructuredResponse {
                outcome,
                reasoning_steps: steps,
                p_correct,
                band,
            },
            tokens,
            logprobs_unavailable: false,
        });
        labels.push(LabelRow {
            item_id,
            ground_truth: truth,
            llm_outcome: outcome,
        });
    }
    Ok(SynthCorpus { traces, labels })
}
