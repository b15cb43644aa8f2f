//! Executes requests for a batch of items under the retry contract.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use lppgate_core::manifest::GiveUp;
use lppgate_core::schema::{parse_structured_response_with, ResponseTrace, MAX_ATTEMPTS};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::segment_spans;
use crate::decoding::DecodingConfig;
use crate::error::{GatewayError, Result};
use crate::provider::{Provider, ProviderRequest, RawResponse};
use crate::template::{render_prompt, TemplateId};

/// One item to classify: its id and the values for the template placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayItem {
    pub item_id: String,
    pub fields: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunnerConfig {
    pub template: TemplateId,
    pub decoding: DecodingConfig,
    /// Must be set to send decoding values other than the defaults.
    pub allow_nonstandard_decoding: bool,
    pub concurrency: usize,
    /// Transport retries per attempt; these do not consume the attempt budget.
    pub transport_retries: u32,
    pub backoff_ms: u64,
}

impl Default for RunnerConfig {
    fn default() -> Self {
        Self {
            template: TemplateId::TextDirect,
            decoding: DecodingConfig::default(),
            allow_nonstandard_decoding: false,
            concurrency: 8,
            transport_retries: 3,
            backoff_ms: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ItemOutcome {
    Accepted(ResponseTrace),
    GaveUp(GiveUp),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunReport {
    /// Accepted traces sorted by item id.
    pub traces: Vec<ResponseTrace>,
    pub give_ups: Vec<GiveUp>,
    /// Items accepted without log-probabilities.
    pub no_logprobs: Vec<String>,
}

fn dispatch(
    provider: &dyn Provider,
    req: &ProviderRequest<'_>,
    cfg: &RunnerConfig,
) -> Result<RawResponse> {
    let mut retry = 0;
    loop {
        match provider.complete(req) {
            Err(GatewayError::Transport(msg)) if retry < cfg.transport_retries => {
                tracing::warn!(item = req.item_id, attempt = req.attempt, retry, %msg, "transport error, backing off");
                if cfg.backoff_ms > 0 {
                    std::thread::sleep(Duration::from_millis(cfg.backoff_ms << retry.min(10)));
                }
                retry += 1;
            }
            other => return other,
        }
    }
}

fn attempt_once(
    item_id: &str,
    attempt: u32,
    resp: RawResponse,
    cfg: &RunnerConfig,
) -> std::result::Result<ResponseTrace, String> {
    let structured = parse_structured_response_with(&resp.text, cfg.template.response_mode())
        .map_err(|e| e.to_string())?;
    let (tokens, logprobs_unavailable) = match &resp.tokens {
        Some(raw) => (
            segment_spans(&resp.text, raw).map_err(|e| e.to_string())?,
            false,
        ),
        None => (Vec::new(), true),
    };
    let mut trace = ResponseTrace {
        item_id: item_id.to_string(),
        attempt,
        structured,
        tokens,
        logprobs_unavailable,
    };
    trace.validate().map_err(|e| e.to_string())?;
    Ok(trace)
}

/// Runs one item through up to four attempts. Only authentication failures
/// and configuration errors are returned as `Err`; everything else ends in a
/// trace or a give-up.
pub fn run_item(
    provider: &dyn Provider,
    item: &GatewayItem,
    cfg: &RunnerConfig,
) -> Result<ItemOutcome> {
    let prompt = render_prompt(cfg.template, &item.fields)?;
    let mut last_reason = String::new();
    for attempt in 1..=MAX_ATTEMPTS {
        let req = ProviderRequest {
            item_id: &item.item_id,
            prompt: &prompt,
            decoding: &cfg.decoding,
            attempt,
        };
        let resp = match dispatch(provider, &req, cfg) {
            Ok(r) => r,
            Err(GatewayError::Transport(msg)) => {
                return Ok(ItemOutcome::GaveUp(GiveUp {
                    item_id: item.item_id.clone(),
                    attempts: attempt,
                    reason: format!("transport: {msg}"),
                }))
            }
            Err(e) => return Err(e),
        };
        match attempt_once(&item.item_id, attempt, resp, cfg) {
            Ok(trace) => return Ok(ItemOutcome::Accepted(trace)),
            Err(reason) => {
                tracing::debug!(item = %item.item_id, attempt, %reason, "rejected response");
                last_reason = reason;
            }
        }
    }
    Ok(ItemOutcome::GaveUp(GiveUp {
        item_id: item.item_id.clone(),
        attempts: MAX_ATTEMPTS,
        reason: last_reason,
    }))
}

/// Runs every item on a bounded worker pool and returns traces sorted by id.
pub fn run(
    provider: &dyn Provider,
    items: &[GatewayItem],
    cfg: &RunnerConfig,
) -> Result<RunReport> {
    cfg.decoding.check(cfg.allow_nonstandard_decoding)?;
    if cfg.concurrency == 0 {
        return Err(GatewayError::Config(
            "concurrency must be at least 1".into(),
        ));
    }
    let mut seen = BTreeSet::new();
    for it in items {
        if !seen.insert(it.item_id.as_str()) {
            return Err(GatewayError::Config(format!(
                "duplicate item id {}",
                it.item_id
            )));
        }
    }
    if !provider.supports_logprobs() {
        tracing::warn!(
            provider = provider.name(),
            "{}",
            GatewayError::ProviderNoLogprobs
        );
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.concurrency)
        .build()
        .map_err(|e| GatewayError::Config(e.to_string()))?;
    let outcomes: Vec<ItemOutcome> = pool.install(|| {
        items
            .par_iter()
            .map(|it| run_item(provider, it, cfg))
            .collect::<Result<_>>()
    })?;

    let mut report = RunReport::default();
    for o in outcomes {
        match o {
            ItemOutcome::Accepted(t) => {
                if t.logprobs_unavailable {
                    report.no_logprobs.push(t.item_id.clone());
                }
                report.traces.push(t);
            }
            ItemOutcome::GaveUp(g) => report.give_ups.push(g),
        }
    }
    report.traces.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    report.give_ups.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    report.no_logprobs.sort();
    Ok(report)
}

/// Reads gateway items from JSONL.
pub fn read_items(path: &std::path::Path) -> Result<Vec<GatewayItem>> {
    let text = std::fs::read_to_string(path).map_err(|e| GatewayError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l)
                .map_err(|e| GatewayError::io(path, format!("line {}: {e}", n + 1)))
        })
        .collect()
}
