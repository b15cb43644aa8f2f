//! Maps provider tokens onto the structured response: the token that emits the
//! outcome value becomes the single outcome record, tokens inside reasoning
//! step descriptions become reasoning records, everything else is dropped.

use lppgate_core::schema::{first_json_object, Span, TokenCandidate, TokenRecord, TraceError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One generated token as reported by a provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawToken {
    pub token: String,
    pub logprob: f64,
    #[serde(default)]
    pub top_logprobs: Vec<TokenCandidate>,
    /// Byte offset of the token in the response text, when the provider reports it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SegmentError {
    #[error("outcome token not found")]
    OutcomeTokenNotFound,
    #[error("invalid token log-probability: {0}")]
    InvalidLogprob(#[from] TraceError),
}

/// Byte range of a JSON member value; string values cover only their contents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldSpan {
    pub path: Vec<String>,
    pub start: usize,
    pub end: usize,
}

impl FieldSpan {
    fn key(&self) -> Option<&str> {
        self.path.last().map(String::as_str)
    }

    fn within(&self, key: &str) -> bool {
        self.path.iter().any(|p| p == key)
    }
}

struct Scanner<'a> {
    b: &'a [u8],
    text: &'a str,
    out: Vec<FieldSpan>,
}

impl Scanner<'_> {
    fn ws(&self, mut i: usize) -> usize {
        while i < self.b.len() && self.b[i].is_ascii_whitespace() {
            i += 1;
        }
        i
    }

    /// `i` points at the opening quote; returns the index after the closing quote.
    fn string_end(&self, i: usize) -> Option<usize> {
        let mut j = i + 1;
        while j < self.b.len() {
            match self.b[j] {
                b'\\' => j += 2,
                b'"' => return Some(j + 1),
                _ => j += 1,
            }
        }
        None
    }

    /// Scans the value at `i`, recording member spans; returns (start, end, next index).
    fn value(&mut self, i: usize, path: &mut Vec<String>) -> Option<(usize, usize, usize)> {
        let i = self.ws(i);
        match *self.b.get(i)? {
            b'{' => {
                let mut j = self.ws(i + 1);
                if self.b.get(j) == Some(&b'}') {
                    return Some((i, j + 1, j + 1));
                }
                loop {
                    if self.b.get(j) != Some(&b'"') {
                        return None;
                    }
                    let kend = self.string_end(j)?;
                    let key: String = serde_json::from_str(&self.text[j..kend]).ok()?;
                    j = self.ws(kend);
                    if self.b.get(j) != Some(&b':') {
                        return None;
                    }
                    path.push(key);
                    let (s, e, next) = self.value(j + 1, path)?;
                    self.out.push(FieldSpan {
                        path: path.clone(),
                        start: s,
                        end: e,
                    });
                    path.pop();
                    j = self.ws(next);
                    match self.b.get(j)? {
                        b',' => j = self.ws(j + 1),
                        b'}' => return Some((i, j + 1, j + 1)),
                        _ => return None,
                    }
                }
            }
            b'[' => {
                let mut j = self.ws(i + 1);
                if self.b.get(j) == Some(&b']') {
                    return Some((i, j + 1, j + 1));
                }
                loop {
                    path.push("#".into());
                    let (_, _, next) = self.value(j, path)?;
                    path.pop();
                    j = self.ws(next);
                    match self.b.get(j)? {
                        b',' => j = self.ws(j + 1),
                        b']' => return Some((i, j + 1, j + 1)),
                        _ => return None,
                    }
                }
            }
            b'"' => {
                let end = self.string_end(i)?;
                Some((i + 1, end - 1, end))
            }
            _ => {
                let mut j = i;
                while j < self.b.len()
                    && !matches!(self.b[j], b',' | b'}' | b']')
                    && !self.b[j].is_ascii_whitespace()
                {
                    j += 1;
                }
                (j > i).then_some((i, j, j))
            }
        }
    }
}

/// Spans of every object member value in the first JSON object of `text`,
/// with byte offsets relative to `text`.
pub fn field_spans(text: &str) -> Option<Vec<FieldSpan>> {
    let (start, _) = first_json_object(text)?;
    let mut sc = Scanner {
        b: text.as_bytes(),
        text,
        out: Vec::new(),
    };
    sc.value(start, &mut Vec::new())?;
    Some(sc.out)
}

/// Byte range of the outcome value: the shallowest `outcome` member outside
/// the reasoning steps.
pub fn outcome_value_span(spans: &[FieldSpan]) -> Option<(usize, usize)> {
    spans
        .iter()
        .filter(|s| s.key() == Some("outcome") && !s.within("reasoning_steps"))
        .min_by_key(|s| s.path.len())
        .map(|s| (s.start, s.end))
}

pub fn reasoning_value_spans(spans: &[FieldSpan]) -> Vec<(usize, usize)> {
    spans
        .iter()
        .filter(|s| s.key() == Some("description") && s.within("reasoning_steps"))
        .map(|s| (s.start, s.end))
        .collect()
}

/// Byte range of each token in `text`.
///
/// Provider offsets are used when every token carries one; otherwise tokens
/// are matched left to right against the text. Tokens that cannot be placed
/// get `None`.
pub fn token_ranges(text: &str, tokens: &[RawToken]) -> Vec<Option<(usize, usize)>> {
    if !tokens.is_empty() && tokens.iter().all(|t| t.offset.is_some()) {
        return tokens
            .iter()
            .map(|t| {
                let s = t.offset.expect("checked");
                let e = s + t.token.len();
                (e <= text.len() && !t.token.is_empty()).then_some((s, e))
            })
            .collect();
    }
    let mut cursor = 0;
    tokens
        .iter()
        .map(|t| {
            if t.token.is_empty() {
                return None;
            }
            let pos = text.get(cursor..)?.find(&t.token)?;
            let s = cursor + pos;
            cursor = s + t.token.len();
            Some((s, cursor))
        })
        .collect()
}

fn overlaps(tok: (usize, usize), field: (usize, usize)) -> bool {
    tok.0 < field.1 && field.0 < tok.1
}

fn has_visible_char(text: &str, tok: (usize, usize), field: (usize, usize)) -> bool {
    let s = tok.0.max(field.0);
    let e = tok.1.min(field.1);
    text.get(s..e)
        .is_some_and(|part| part.chars().any(|c| !c.is_whitespace() && c != '"'))
}

/// Index of the token carrying the outcome value.
pub fn outcome_token_index(text: &str, ranges: &[Option<(usize, usize)>]) -> Option<usize> {
    let spans = field_spans(text)?;
    let field = outcome_value_span(&spans)?;
    ranges
        .iter()
        .position(|r| r.is_some_and(|r| overlaps(r, field) && has_visible_char(text, r, field)))
}

pub fn segment_spans(text: &str, tokens: &[RawToken]) -> Result<Vec<TokenRecord>, SegmentError> {
    let spans = field_spans(text).ok_or(SegmentError::OutcomeTokenNotFound)?;
    let ranges = token_ranges(text, tokens);
    let outcome = outcome_token_index(text, &ranges).ok_or(SegmentError::OutcomeTokenNotFound)?;
    let reasoning = reasoning_value_spans(&spans);
    let mut out = Vec::new();
    for (i, (tok, range)) in tokens.iter().zip(&ranges).enumerate() {
        let span = if i == outcome {
            Span::Outcome
        } else if range.is_some_and(|r| reasoning.iter().any(|&f| overlaps(r, f))) {
            Span::Reasoning
        } else {
            continue;
        };
        out.push(TokenRecord::new(
            span,
            TokenCandidate::new(tok.token.clone(), tok.logprob),
            tok.top_logprobs.clone(),
        )?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(parts: &[&str]) -> Vec<RawToken> {
        parts
            .iter()
            .map(|p| RawToken {
                token: p.to_string(),
                logprob: -0.1,
                top_logprobs: vec![],
                offset: None,
            })
            .collect()
    }

    #[test]
    fn single_outcome_record_at_field_position() {
        let text = r#"{"outcome":"1","p_correct":80}"#;
        let t = toks(&[
            "{\"", "outcome", "\":\"", "1", "\",\"", "p", "_correct", "\":", "80", "}",
        ]);
        let recs = segment_spans(text, &t).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].span, Span::Outcome);
        assert_eq!(recs[0].chosen.surface, "1");
    }

    #[test]
    fn digit_inside_reasoning_is_not_the_outcome() {
        let text =
            r#"{"reasoning_steps":[{"step_number":1,"description":"rule 1 applies"}],"outcome":1}"#;
        let t = toks(&[
            "{\"",
            "reasoning",
            "_steps",
            "\":[{\"",
            "step",
            "_number",
            "\":",
            "1",
            ",\"",
            "description",
            "\":\"",
            "rule",
            " ",
            "1",
            " applies",
            "\"}],\"",
            "outcome",
            "\":",
            "1",
            "}",
        ]);
        let recs = segment_spans(text, &t).unwrap();
        let outcome: Vec<_> = recs.iter().filter(|r| r.span == Span::Outcome).collect();
        assert_eq!(outcome.len(), 1);
        let reasoning: Vec<_> = recs
            .iter()
            .filter(|r| r.span == Span::Reasoning)
            .map(|r| r.chosen.surface.as_str())
            .collect();
        assert_eq!(reasoning, vec!["rule", " ", "1", " applies"]);
        // The outcome is the second-to-last token, not the digit inside the description.
        let idx = outcome_token_index(text, &token_ranges(text, &t)).unwrap();
        assert_eq!(idx, t.len() - 2);
    }

    #[test]
    fn direct_answer_has_no_reasoning_records() {
        let text = r#"{"outcome":"0","band":"H"}"#;
        let t = toks(&["{\"outcome\":\"", "0", "\",\"band\":\"H\"}"]);
        let recs = segment_spans(text, &t).unwrap();
        assert_eq!(recs.iter().filter(|r| r.span == Span::Reasoning).count(), 0);
    }

    #[test]
    fn nested_classification_object_is_found() {
        let text = r#"prefix {"classifications":{"hate":{"outcome":"2"}}} trailing"#;
        let t = toks(&[
            "prefix ",
            "{\"classifications\":{\"hate\":{\"outcome\":\"",
            "2",
            "\"}}}",
            " trailing",
        ]);
        let recs = segment_spans(text, &t).unwrap();
        assert_eq!(recs[0].chosen.surface, "2");
    }

    #[test]
    fn provider_offsets_take_precedence() {
        let text = r#"{"outcome":"1"}"#;
        let mut t = toks(&["{\"outcome\":\"", "1", "\"}"]);
        for (tok, off) in t.iter_mut().zip([0usize, 12, 13]) {
            tok.offset = Some(off);
        }
        assert_eq!(outcome_token_index(text, &token_ranges(text, &t)), Some(1));
    }

    #[test]
    fn missing_outcome_field_is_rejected() {
        let text = r#"{"band":"H"}"#;
        assert_eq!(
            segment_spans(text, &toks(&[text])),
            Err(SegmentError::OutcomeTokenNotFound)
        );
    }

    #[test]
    fn field_paths_track_nesting() {
        let spans = field_spans(r#"{"a":{"b":[{"c":"x"}]},"d":true}"#).unwrap();
        let paths: Vec<String> = spans.iter().map(|s| s.path.join("/")).collect();
        assert_eq!(paths, vec!["a/b/#/c", "a/b", "a", "d"]);
    }
}
