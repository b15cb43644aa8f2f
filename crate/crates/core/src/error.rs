use thiserror::Error;

/// Errors raised by the numeric and dataset layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GateError {
    #[error("empty candidate list")]
    EmptyCandidates,
    #[error("no outcome candidate maps to a schema label")]
    NoLabelMass,
    #[error("log-probabilities unavailable for gray-box features")]
    GrayBoxUnavailable,
    #[error("feature include set is empty")]
    EmptyFamilySet,
    #[error("insufficient negatives: {0}")]
    InsufficientNegatives(String),
    #[error("ratio unreachable: {protected} protected majority examples exceed target {target}")]
    RatioUnreachable { protected: usize, target: usize },
    #[error("singular linear system")]
    SingularSystem,
    #[error("degenerate fold: {0}")]
    DegenerateFold(String),
    #[error("feature mismatch: {0}")]
    FeatureMismatch(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("missing feature `{0}`")]
    MissingFeature(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl GateError {
    /// Stable machine-readable tag used in CLI error documents.
    pub fn kind(&self) -> &'static str {
        match self {
            GateError::EmptyCandidates => "empty_candidates",
            GateError::NoLabelMass => "no_label_mass",
            GateError::GrayBoxUnavailable => "gray_box_unavailable",
            GateError::EmptyFamilySet => "empty_family_set",
            GateError::InsufficientNegatives(_) => "insufficient_negatives",
            GateError::RatioUnreachable { .. } => "ratio_unreachable",
            GateError::SingularSystem => "singular_system",
            GateError::DegenerateFold(_) => "degenerate_fold",
            GateError::FeatureMismatch(_) => "feature_mismatch",
            GateError::LengthMismatch { .. } => "length_mismatch",
            GateError::MissingFeature(_) => "missing_feature",
            GateError::InvalidInput(_) => "invalid_input",
            GateError::Io { .. } => "io",
        }
    }
}

impl GateError {
    pub fn io(path: impl AsRef<std::path::Path>, err: impl std::fmt::Display) -> Self {
        GateError::Io {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }
}

pub type Result<T, E = GateError> = std::result::Result<T, E>;
