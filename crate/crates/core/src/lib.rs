//! Trust-or-escalate gating for LLM classification outputs.
//!
//! Token-level log-probabilities and structured responses are turned into
//! performance-predictor features, a calibrated ridge meta-model estimates the
//! probability that the LLM is correct, and a cost-aware threshold routes each
//! item to *trust* or *human review*.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod io;
pub mod manifest;
pub mod metrics;
pub mod pipeline;
pub mod policy;
pub mod scalar;
pub mod schema;
pub mod synth;
pub mod trainer;

pub use error::{GateError, Result};
pub use scalar::Scalar;

/// Feature vector over the default `f64` scalar.
pub type Features = features::FeatureVector<f64>;

/// Trained gate over the default `f64` scalar.
pub type Gate = trainer::TrainedGate<f64>;
