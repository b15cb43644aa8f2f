//! Integer-token output schema: parsing, outcome normalization, confidence
//! snapping, and the retry contract, plus the `ResponseTrace` wire types.

use std::fmt;

use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

/// Largest attempt number allowed: the initial request plus three retries.
pub const MAX_ATTEMPTS: u32 = 4;
/// Positive log-probabilities up to this value are transport noise and clamp to 0.
pub const LOGPROB_TOLERANCE: f64 = 1e-9;
/// Number of candidates requested per generated token.
pub const TOP_LOGPROBS: usize = 20;
/// Required reasoning step count for chain-of-thought responses.
pub const COT_STEPS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OutcomeLabel {
    No = 0,
    Yes = 1,
    InconclusiveEvidence = 2,
    InconclusiveDefinition = 3,
}

impl OutcomeLabel {
    pub const ALL: [OutcomeLabel; 4] = [
        OutcomeLabel::No,
        OutcomeLabel::Yes,
        OutcomeLabel::InconclusiveEvidence,
        OutcomeLabel::InconclusiveDefinition,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    /// The surface form a well-behaved model emits for this label.
    pub fn canonical_surface(self) -> &'static str {
        match self {
            OutcomeLabel::No => "0",
            OutcomeLabel::Yes => "1",
            OutcomeLabel::InconclusiveEvidence => "2",
            OutcomeLabel::InconclusiveDefinition => "3",
        }
    }

    pub fn word(self) -> &'static str {
        match self {
            OutcomeLabel::No => "no",
            OutcomeLabel::Yes => "yes",
            OutcomeLabel::InconclusiveEvidence => "inconclusive_evidence",
            OutcomeLabel::InconclusiveDefinition => "inconclusive_definition",
        }
    }

    pub fn is_abstention(self) -> bool {
        matches!(
            self,
            OutcomeLabel::InconclusiveEvidence | OutcomeLabel::InconclusiveDefinition
        )
    }
}

impl fmt::Display for OutcomeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.word())
    }
}

impl Serialize for OutcomeLabel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.code())
    }
}

impl<'de> Deserialize<'de> for OutcomeLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        outcome_from_value(&v).ok_or_else(|| de::Error::custom(format!("invalid outcome {v}")))
    }
}

fn outcome_from_value(v: &Value) -> Option<OutcomeLabel> {
    match v {
        Value::String(s) => normalize_outcome_token(s),
        Value::Number(n) => n
            .as_u64()
            .and_then(|c| u8::try_from(c).ok())
            .and_then(OutcomeLabel::from_code),
        _ => None,
    }
}

/// Map a raw token surface onto a schema label.
///
/// Surrounding whitespace and quotes are ignored; digits `0`-`3` and the word
/// forms `yes`, `no`, `inconclusive_evidence`, `inconclusive_definition`
/// (any case) are accepted. Anything else yields `None`.
pub fn normalize_outcome_token(surface: &str) -> Option<OutcomeLabel> {
    let trimmed = surface.trim_matches(|c: char| c.is_whitespace() || c == '"' || c == '\'');
    match trimmed {
        "0" => return Some(OutcomeLabel::No),
        "1" => return Some(OutcomeLabel::Yes),
        "2" => return Some(OutcomeLabel::InconclusiveEvidence),
        "3" => return Some(OutcomeLabel::InconclusiveDefinition),
        _ => {}
    }
    let lower = trimmed.to_ascii_lowercase();
    OutcomeLabel::ALL.into_iter().find(|l| l.word() == lower)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConfidenceBand {
    VL,
    L,
    M,
    H,
    VH,
}

impl ConfidenceBand {
    pub const ALL: [ConfidenceBand; 5] = [
        ConfidenceBand::VL,
        ConfidenceBand::L,
        ConfidenceBand::M,
        ConfidenceBand::H,
        ConfidenceBand::VH,
    ];

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "VL" => Some(ConfidenceBand::VL),
            "L" => Some(ConfidenceBand::L),
            "M" => Some(ConfidenceBand::M),
            "H" => Some(ConfidenceBand::H),
            "VH" => Some(ConfidenceBand::VH),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Snap a self-reported percentage to the nearest multiple of 5 in `[0, 100]`.
pub fn snap_confidence(raw: i64) -> u8 {
    let clamped = raw.clamp(0, 100);
    (((clamped + 2) / 5) * 5) as u8
}

/// Lenient variant for fractional percentages; halves round away from zero.
pub fn snap_confidence_f64(raw: f64) -> Option<u8> {
    if !raw.is_finite() {
        return None;
    }
    let clamped = raw.clamp(0.0, 100.0);
    Some(((clamped / 5.0).round() * 5.0) as u8)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningStep {
    pub step_number: u32,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredResponse {
    pub outcome: OutcomeLabel,
    #[serde(default)]
    pub reasoning_steps: Vec<ReasoningStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_correct: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<ConfidenceBand>,
}

impl StructuredResponse {
    pub fn direct(outcome: OutcomeLabel) -> Self {
        Self {
            outcome,
            reasoning_steps: Vec::new(),
            p_correct: None,
            band: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Error, Serialize, Deserialize)]
pub enum ParseFailure {
    #[error("malformed JSON")]
    MalformedJson,
    #[error("missing or unrecognised outcome")]
    MissingOutcome,
    #[error("invalid confidence band")]
    InvalidBand,
    #[error("invalid reasoning steps")]
    InvalidSteps,
    /// The outcome field could not be aligned to a generated token.
    #[error("outcome token not found")]
    OutcomeTokenNotFound,
}

/// Which prompt variant produced the response; controls the step-count check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseMode {
    Direct,
    ChainOfThought,
    #[default]
    Any,
}

/// Byte range of the first balanced `{...}` object in `raw`, honouring strings.
pub fn first_json_object(raw: &str) -> Option<(usize, usize)> {
    let bytes = raw.as_bytes();
    let start = raw.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some((start, i + 1));
                }
            }
            _ => {}
        }
    }
    None
}

/// Unwrap `{"classifications": {<concept>: {...}}}` when exactly one concept is present.
fn classification_object(root: &Value) -> Result<&serde_json::Map<String, Value>, ParseFailure> {
    let obj = root.as_object().ok_or(ParseFailure::MalformedJson)?;
    if obj.contains_key("outcome") {
        return Ok(obj);
    }
    match obj.get("classifications").and_then(Value::as_object) {
        Some(inner) if inner.len() == 1 => inner
            .values()
            .next()
            .and_then(Value::as_object)
            .ok_or(ParseFailure::MalformedJson),
        _ => Ok(obj),
    }
}

pub fn parse_structured_response(raw: &str) -> Result<StructuredResponse, ParseFailure> {
    parse_structured_response_with(raw, ResponseMode::Any)
}

pub fn parse_structured_response_with(
    raw: &str,
    mode: ResponseMode,
) -> Result<StructuredResponse, ParseFailure> {
    let (start, end) = first_json_object(raw).ok_or(ParseFailure::MalformedJson)?;
    let root: Value =
        serde_json::from_str(&raw[start..end]).map_err(|_| ParseFailure::MalformedJson)?;
    let obj = classification_object(&root)?;

    let outcome = obj
        .get("outcome")
        .and_then(outcome_from_value)
        .ok_or(ParseFailure::MissingOutcome)?;

    let p_correct = match obj.get("p_correct") {
        Some(Value::Number(n)) => match n.as_i64() {
            Some(i) => Some(snap_confidence(i)),
            None => n.as_f64().and_then(snap_confidence_f64),
        },
        Some(Value::String(s)) => s.trim().parse::<f64>().ok().and_then(snap_confidence_f64),
        _ => None,
    };

    let band = match obj.get("band") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(ConfidenceBand::parse(s).ok_or(ParseFailure::InvalidBand)?),
        Some(_) => return Err(ParseFailure::InvalidBand),
    };

    let reasoning_steps = parse_steps(obj.get("reasoning_steps"))?;
    match mode {
        ResponseMode::ChainOfThought if reasoning_steps.len() != COT_STEPS => {
            return Err(ParseFailure::InvalidSteps)
        }
        ResponseMode::Direct if !reasoning_steps.is_empty() => {
            return Err(ParseFailure::InvalidSteps)
        }
        _ => {}
    }

    Ok(StructuredResponse {
        outcome,
        reasoning_steps,
        p_correct,
        band,
    })
}

fn parse_steps(v: Option<&Value>) -> Result<Vec<ReasoningStep>, ParseFailure> {
    let items = match v {
        None | Some(Value::Null) => return Ok(Vec::new()),
        Some(Value::Array(items)) => items,
        Some(_) => return Err(ParseFailure::InvalidSteps),
    };
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let step_number = item
                .get("step_number")
                .and_then(Value::as_u64)
                .ok_or(ParseFailure::InvalidSteps)?;
            let description = item
                .get("description")
                .and_then(Value::as_str)
                .ok_or(ParseFailure::InvalidSteps)?;
            if step_number != i as u64 + 1 {
                return Err(ParseFailure::InvalidSteps);
            }
            Ok(ReasoningStep {
                step_number: step_number as u32,
                description: description.to_owned(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetryDecision {
    Accept,
    Retry,
    GiveUp,
}

/// Retry budget: failures on attempts 1..=3 are re-requested, attempt 4 is final.
pub fn decide_retry(attempt: u32, failure: Option<ParseFailure>) -> RetryDecision {
    match failure {
        None => RetryDecision::Accept,
        Some(_) if attempt < MAX_ATTEMPTS => RetryDecision::Retry,
        Some(_) => RetryDecision::GiveUp,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenCandidate {
    pub surface: String,
    pub logprob: f64,
}

impl TokenCandidate {
    pub fn new(surface: impl Into<String>, logprob: f64) -> Self {
        Self {
            surface: surface.into(),
            logprob,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Span {
    Outcome,
    Reasoning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub span: Span,
    pub chosen: TokenCandidate,
    #[serde(default)]
    pub candidates: Vec<TokenCandidate>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceError {
    #[error("log-probability {0} is positive beyond tolerance")]
    PositiveLogprob(f64),
    #[error("non-finite log-probability")]
    NonFiniteLogprob,
    #[error("expected exactly one outcome token, found {0}")]
    OutcomeSpanCount(usize),
    #[error("attempt {0} outside 1..=4")]
    AttemptOutOfRange(u32),
}

fn clamp_logprob(lp: f64) -> Result<f64, TraceError> {
    if lp.is_nan() {
        return Err(TraceError::NonFiniteLogprob);
    }
    if lp > LOGPROB_TOLERANCE {
        return Err(TraceError::PositiveLogprob(lp));
    }
    Ok(lp.min(0.0))
}

impl TokenRecord {
    /// Build a record with clamped log-probabilities, candidates sorted by
    /// descending log-probability, and the chosen token guaranteed present.
    pub fn new(
        span: Span,
        chosen: TokenCandidate,
        candidates: Vec<TokenCandidate>,
    ) -> Result<Self, TraceError> {
        let mut rec = Self {
            span,
            chosen,
            candidates,
        };
        rec.normalize()?;
        Ok(rec)
    }

    pub fn normalize(&mut self) -> Result<(), TraceError> {
        self.chosen.logprob = clamp_logprob(self.chosen.logprob)?;
        for c in &mut self.candidates {
            c.logprob = clamp_logprob(c.logprob)?;
        }
        self.candidates
            .sort_by(|a, b| b.logprob.total_cmp(&a.logprob));
        self.candidates.truncate(TOP_LOGPROBS);
        if !self
            .candidates
            .iter()
            .any(|c| c.surface == self.chosen.surface)
        {
            self.candidates.push(self.chosen.clone());
            self.candidates
                .sort_by(|a, b| b.logprob.total_cmp(&a.logprob));
        }
        Ok(())
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// One model response with its token-level log-probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseTrace {
    pub item_id: String,
    pub attempt: u32,
    pub structured: StructuredResponse,
    #[serde(default)]
    pub tokens: Vec<TokenRecord>,
    /// Set when the provider could not return log-probabilities.
    #[serde(default, skip_serializing_if = "is_false")]
    pub logprobs_unavailable: bool,
}

impl ResponseTrace {
    pub fn outcome_record(&self) -> Option<&TokenRecord> {
        self.tokens.iter().find(|t| t.span == Span::Outcome)
    }

    pub fn reasoning_records(&self) -> impl Iterator<Item = &TokenRecord> {
        self.tokens.iter().filter(|t| t.span == Span::Reasoning)
    }

    /// Normalize token records and check the per-trace invariants.
    pub fn validate(&mut self) -> Result<(), TraceError> {
        if !(1..=MAX_ATTEMPTS).contains(&self.attempt) {
            return Err(TraceError::AttemptOutOfRange(self.attempt));
        }
        for t in &mut self.tokens {
            t.normalize()?;
        }
        let outcomes = self
            .tokens
            .iter()
            .filter(|t| t.span == Span::Outcome)
            .count();
        let expected = if self.logprobs_unavailable { 0 } else { 1 };
        if outcomes != expected {
            return Err(TraceError::OutcomeSpanCount(outcomes));
        }
        Ok(())
    }
}
