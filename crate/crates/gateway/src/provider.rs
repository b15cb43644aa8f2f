//! Provider abstraction and the OpenAI-compatible HTTP adapter.

use std::time::Duration;

use lppgate_core::schema::TokenCandidate;
use serde_json::{json, Value};

use crate::align::RawToken;
use crate::decoding::DecodingConfig;
use crate::error::{GatewayError, Result};

pub const API_KEY_ENV: &str = "LPP_API_KEY";

#[derive(Debug, Clone, Copy)]
pub struct ProviderRequest<'a> {
    pub item_id: &'a str,
    pub prompt: &'a str,
    pub decoding: &'a DecodingConfig,
    pub attempt: u32,
}

/// Raw model output; `tokens` is `None` when the provider returned no log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct RawResponse {
    pub text: String,
    pub tokens: Option<Vec<RawToken>>,
}

pub trait Provider: Send + Sync {
    fn name(&self) -> &str;

    /// Whether the endpoint can return per-token log-probabilities at all.
    fn supports_logprobs(&self) -> bool {
        true
    }

    /// One request. Transport problems map to [`GatewayError::Transport`],
    /// rejected credentials to [`GatewayError::AuthFailure`].
    fn complete(&self, req: &ProviderRequest<'_>) -> Result<RawResponse>;
}

/// Chat-completions endpoint speaking the OpenAI wire format.
#[derive(Debug)]
pub struct OpenAiCompatible {
    base_url: String,
    model: String,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl OpenAiCompatible {
    pub fn new(
        base_url: impl Into<String>,
        model: impl Into<String>,
        api_key: impl Into<String>,
        timeout: Duration,
    ) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            model: model.into(),
            api_key: api_key.into(),
            client,
        })
    }

    /// Reads the key from `LPP_API_KEY`.
    pub fn from_env(
        base_url: impl Into<String>,
        model: impl Into<String>,
        timeout: Duration,
    ) -> Result<Self> {
        let key = std::env::var(API_KEY_ENV).map_err(|_| {
            GatewayError::AuthFailure(format!("environment variable {API_KEY_ENV} is not set"))
        })?;
        Self::new(base_url, model, key, timeout)
    }

    pub fn request_body(&self, req: &ProviderRequest<'_>) -> Value {
        let d = req.decoding;
        json!({
            "model": self.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": d.temperature,
            "top_p": d.top_p,
            "n": d.n,
            "max_tokens": d.max_output_tokens,
            "logprobs": true,
            "top_logprobs": d.top_logprobs,
        })
    }
}

impl Provider for OpenAiCompatible {
    fn name(&self) -> &str {
        "openai-compatible"
    }

    fn complete(&self, req: &ProviderRequest<'_>) -> Result<RawResponse> {
        let resp = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .bearer_auth(&self.api_key)
            .json(&self.request_body(req))
            .send()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(GatewayError::AuthFailure(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(GatewayError::Transport(format!("HTTP {status}")));
        }
        let body: Value = resp
            .json()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        parse_chat_completion(&body)
    }
}

/// Extracts text and per-token log-probabilities from a chat-completion body.
pub fn parse_chat_completion(body: &Value) -> Result<RawResponse> {
    let choice = body
        .pointer("/choices/0")
        .ok_or_else(|| GatewayError::Transport("response has no choices".into()))?;
    let text = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let tokens = choice
        .pointer("/logprobs/content")
        .and_then(Value::as_array)
        .map(|items| {
            items
                .iter()
                .map(|t| {
                    let token = t
                        .get("token")
                        .and_then(Value::as_str)
                        .unwrap_or_default()
                        .to_string();
                    let logprob = t.get("logprob").and_then(Value::as_f64).unwrap_or(f64::NAN);
                    let top_logprobs = t
                        .get("top_logprobs")
                        .and_then(Value::as_array)
                        .map(|alts| {
                            alts.iter()
                                .filter_map(|a| {
                                    Some(TokenCandidate::new(
                                        a.get("token")?.as_str()?,
                                        a.get("logprob")?.as_f64()?,
                                    ))
                                })
                                .collect()
                        })
                        .unwrap_or_default();
                    RawToken {
                        token,
                        logprob,
                        top_logprobs,
                        offset: t
                            .get("text_offset")
                            .and_then(Value::as_u64)
                            .map(|o| o as usize),
                    }
                })
                .collect()
        });
    Ok(RawResponse { text, tokens })
}
