use lppgate_core::schema::TOP_LOGPROBS;
use serde::{Deserialize, Serialize};

use crate::error::{GatewayError, Result};

/// Sampling parameters sent with every request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodingConfig {
    pub temperature: f64,
    pub top_p: f64,
    pub n: u32,
    pub max_output_tokens: u32,
    pub top_logprobs: u32,
}

impl Default for DecodingConfig {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            top_p: 1.0,
            n: 1,
            max_output_tokens: 8096,
            top_logprobs: TOP_LOGPROBS as u32,
        }
    }
}

impl DecodingConfig {
    pub fn is_default(&self) -> bool {
        *self == Self::default()
    }

    /// Non-default values are only allowed with an explicit override, which
    /// the caller must record in the run manifest.
    pub fn check(&self, allow_override: bool) -> Result<()> {
        if !self.is_default() && !allow_override {
            return Err(GatewayError::NonstandardDecoding);
        }
        if self.n != 1 {
            return Err(GatewayError::Config("only n = 1 is supported".into()));
        }
        if self.top_logprobs as usize > TOP_LOGPROBS {
            return Err(GatewayError::Config(format!(
                "top_logprobs is capped at {TOP_LOGPROBS}"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_pass_without_override() {
        assert!(DecodingConfig::default().check(false).is_ok());
    }

    #[test]
    fn changed_temperature_needs_override() {
        let d = DecodingConfig {
            temperature: 0.7,
            ..DecodingConfig::default()
        };
        assert_eq!(d.check(false), Err(GatewayError::NonstandardDecoding));
        assert!(d.check(true).is_ok());
    }
}
