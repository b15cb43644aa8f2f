//! LLM inference gateway: prompt rendering, provider adapters, token span
//! alignment and the bounded retry runner that writes response traces.

pub mod align;
pub mod decoding;
pub mod error;
pub mod provider;
pub mod runner;
pub mod stub;
pub mod template;

pub use decoding::DecodingConfig;
pub use error::{GatewayError, Result};
pub use provider::{OpenAiCompatible, Provider, ProviderRequest, RawResponse};
pub use runner::{run, run_item, GatewayItem, ItemOutcome, RunReport, RunnerConfig};
pub use stub::{StubEntry, StubProvider, StubResponse};
pub use template::{render_prompt, TemplateId};
