use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("template placeholder {{{{{0}}}}} has no value")]
    MissingPlaceholder(String),
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("authentication failed: {0}")]
    AuthFailure(String),
    #[error("provider does not return log-probabilities")]
    ProviderNoLogprobs,
    #[error("decoding parameters differ from the experiment defaults and no override was given")]
    NonstandardDecoding,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl GatewayError {
    pub fn kind(&self) -> &'static str {
        match self {
            GatewayError::MissingPlaceholder(_) => "missing_placeholder",
            GatewayError::UnknownTemplate(_) => "unknown_template",
            GatewayError::Transport(_) => "transport",
            GatewayError::AuthFailure(_) => "auth_failure",
            GatewayError::ProviderNoLogprobs => "provider_no_logprobs",
            GatewayError::NonstandardDecoding => "nonstandard_decoding",
            GatewayError::Config(_) => "config",
            GatewayError::Io { .. } => "io",
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, err: impl std::fmt::Display) -> Self {
        GatewayError::Io {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }
}

pub type Result<T, E = GatewayError> = std::result::Result<T, E>;
