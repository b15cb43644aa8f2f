//! Prompt templates and placeholder substitution.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use lppgate_core::schema::ResponseMode;
use serde::{Deserialize, Serialize};

use crate::error::{GatewayError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemplateId {
    TextDirect,
    TextCot,
    MultimodalDirect,
    MultimodalCot,
}

impl TemplateId {
    pub const ALL: [TemplateId; 4] = [
        TemplateId::TextDirect,
        TemplateId::TextCot,
        TemplateId::MultimodalDirect,
        TemplateId::MultimodalCot,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::TextDirect => "text-direct",
            TemplateId::TextCot => "text-cot",
            TemplateId::MultimodalDirect => "multimodal-direct",
            TemplateId::MultimodalCot => "multimodal-cot",
        }
    }

    pub fn body(self) -> &'static str {
        match self {
            TemplateId::TextDirect => include_str!("../templates/text-direct.txt"),
            TemplateId::TextCot => include_str!("../templates/text-cot.txt"),
            TemplateId::MultimodalDirect => include_str!("../templates/multimodal-direct.txt"),
            TemplateId::MultimodalCot => include_str!("../templates/multimodal-cot.txt"),
        }
    }

    pub fn response_mode(self) -> ResponseMode {
        match self {
            TemplateId::TextDirect | TemplateId::MultimodalDirect => ResponseMode::Direct,
            TemplateId::TextCot | TemplateId::MultimodalCot => ResponseMode::ChainOfThought,
        }
    }

    pub fn placeholders(self) -> Vec<&'static str> {
        placeholders(self.body())
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = GatewayError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| GatewayError::UnknownTemplate(s.to_string()))
    }
}

/// Placeholder names (without braces) in order of first appearance.
pub fn placeholders(body: &str) -> Vec<&str> {
    let mut out: Vec<&str> = Vec::new();
    let mut rest = body;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        let Some(end) = after.find("}}") else { break };
        let name = &after[..end];
        if !out.contains(&name) {
            out.push(name);
        }
        rest = &after[end + 2..];
    }
    out
}

/// Substitutes every `{{NAME}}` in the template with `fields[NAME]`.
///
/// Values are inserted verbatim, so media URIs pass through untouched and
/// placeholder-like text inside a value is never expanded again.
pub fn render_prompt(template: TemplateId, fields: &BTreeMap<String, String>) -> Result<String> {
    render_body(template.body(), fields)
}

pub fn render_body(body: &str, fields: &BTreeMap<String, String>) -> Result<String> {
    let mut out = String::with_capacity(body.len());
    let mut rest = body;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        let Some(end) = after.find("}}") else { break };
        let name = &after[..end];
        let value = fields
            .get(name)
            .ok_or_else(|| GatewayError::MissingPlaceholder(name.to_string()))?;
        out.push_str(&rest[..start]);
        out.push_str(value);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}
