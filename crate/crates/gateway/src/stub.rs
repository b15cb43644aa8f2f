//! Fixture-backed provider for offline runs and tests.

use std::collections::BTreeMap;
use std::path::Path;

use lppgate_core::schema::{ResponseTrace, StructuredResponse, TokenCandidate};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::align::{outcome_token_index, token_ranges, RawToken};
use crate::error::{GatewayError, Result};
use crate::provider::{Provider, ProviderRequest, RawResponse};

fn yes() -> bool {
    true
}

/// Canned output for one attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StubResponse {
    pub text: String,
    #[serde(default = "yes")]
    pub logprobs: bool,
    /// Alternatives reported for the outcome token; the chosen surface takes
    /// its log-probability from this list when present.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outcome_candidates: Vec<TokenCandidate>,
}

/// Responses for one item, consumed by attempt number; the last one repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StubEntry {
    pub item_id: String,
    pub responses: Vec<StubResponse>,
}

#[derive(Debug, Clone, Default)]
pub struct StubProvider {
    entries: BTreeMap<String, Vec<StubResponse>>,
    logprobs: bool,
}

impl StubProvider {
    pub fn new(entries: Vec<StubEntry>) -> Self {
        Self {
            entries: entries
                .into_iter()
                .map(|e| (e.item_id, e.responses))
                .collect(),
            logprobs: true,
        }
    }

    /// A provider that reports no log-probability support.
    pub fn without_logprobs(mut self) -> Self {
        self.logprobs = false;
        self
    }

    /// Reads a JSONL fixture of [`StubEntry`] lines.
    pub fn from_fixture(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GatewayError::io(path, e))?;
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            entries.push(
                serde_json::from_str(line)
                    .map_err(|e| GatewayError::io(path, format!("line {}: {e}", n + 1)))?,
            );
        }
        Ok(Self::new(entries))
    }

    /// Echoes existing traces: each item answers with its structured response
    /// and the outcome alternatives recorded in the trace.
    pub fn from_traces(traces: &[ResponseTrace]) -> Self {
        Self::new(
            traces
                .iter()
                .map(|t| StubEntry {
                    item_id: t.item_id.clone(),
                    responses: vec![StubResponse {
                        text: render_structured(&t.structured),
                        logprobs: !t.logprobs_unavailable,
                        outcome_candidates: t
                            .outcome_record()
                            .map(|r| r.candidates.clone())
                            .unwrap_or_default(),
                    }],
                })
                .collect(),
        )
    }

    pub fn to_fixture(&self) -> String {
        let mut out = String::new();
        for (id, responses) in &self.entries {
            let e = StubEntry {
                item_id: id.clone(),
                responses: responses.clone(),
            };
            out.push_str(&serde_json::to_string(&e).expect("entry serializes"));
            out.push('\n');
        }
        out
    }
}

/// Canonical JSON text for a structured response.
pub fn render_structured(s: &StructuredResponse) -> String {
    let mut obj = Map::new();
    obj.insert("outcome".into(), json!(s.outcome.canonical_surface()));
    if !s.reasoning_steps.is_empty() {
        obj.insert(
            "reasoning_steps".into(),
            Value::Array(
                s.reasoning_steps
                    .iter()
                    .map(|st| json!({"step_number": st.step_number, "description": st.description}))
                    .collect(),
            ),
        );
    }
    if let Some(p) = s.p_correct {
        obj.insert("p_correct".into(), json!(p));
    }
    if let Some(b) = s.band {
        obj.insert(
            "band".into(),
            serde_json::to_value(b).expect("band serializes"),
        );
    }
    Value::Object(obj).to_string()
}

/// Splits text into word runs, whitespace runs and single punctuation characters.
pub fn stub_tokenize(text: &str) -> Vec<&str> {
    #[derive(PartialEq, Clone, Copy)]
    enum Class {
        Word,
        Space,
        Other,
    }
    let class = |c: char| {
        if c.is_alphanumeric() || c == '_' {
            Class::Word
        } else if c.is_whitespace() {
            Class::Space
        } else {
            Class::Other
        }
    };
    let mut out = Vec::new();
    let mut start = 0;
    let mut prev: Option<Class> = None;
    for (i, c) in text.char_indices() {
        let k = class(c);
        if let Some(p) = prev {
            if p != k || k == Class::Other {
                out.push(&text[start..i]);
                start = i;
            }
        }
        prev = Some(k);
    }
    if start < text.len() {
        out.push(&text[start..]);
    }
    out
}

/// Deterministic probability in [0.55, 1.0) for a token position.
fn pseudo_prob(item_id: &str, index: usize, token: &str) -> f64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in item_id
        .bytes()
        .chain((index as u64).to_le_bytes())
        .chain(token.bytes())
    {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    0.55 + 0.45 * ((h % 1000) as f64 / 1000.0)
}

fn synth_tokens(item_id: &str, r: &StubResponse) -> Vec<RawToken> {
    let mut tokens: Vec<RawToken> = stub_tokenize(&r.text)
        .into_iter()
        .enumerate()
        .map(|(i, tok)| {
            let p = pseudo_prob(item_id, i, tok);
            RawToken {
                token: tok.to_string(),
                logprob: p.ln(),
                top_logprobs: vec![
                    TokenCandidate::new(tok, p.ln()),
                    TokenCandidate::new(format!("{tok}\u{2581}"), ((1.0 - p) * 0.75).ln()),
                ],
                offset: None,
            }
        })
        .collect();
    if !r.outcome_candidates.is_empty() {
        let ranges = token_ranges(&r.text, &tokens);
        if let Some(i) = outcome_token_index(&r.text, &ranges) {
            let t = &mut tokens[i];
            t.top_logprobs = r.outcome_candidates.clone();
            if let Some(c) = r.outcome_candidates.iter().find(|c| c.surface == t.token) {
                t.logprob = c.logprob;
            }
        }
    }
    tokens
}

impl Provider for StubProvider {
    fn name(&self) -> &str {
        "stub"
    }

    fn supports_logprobs(&self) -> bool {
        self.logprobs
    }

    fn complete(&self, req: &ProviderRequest<'_>) -> Result<RawResponse> {
        let responses = self
            .entries
            .get(req.item_id)
            .filter(|r| !r.is_empty())
            .ok_or_else(|| {
                GatewayError::Config(format!(
                    "stub fixture has no response for item {}",
                    req.item_id
                ))
            })?;
        let idx = (req.attempt.max(1) as usize - 1).min(responses.len() - 1);
        let r = &responses[idx];
        let tokens = (self.logprobs && r.logprobs).then(|| synth_tokens(req.item_id, r));
        Ok(RawResponse {
            text: r.text.clone(),
            tokens,
        })
    }
}
