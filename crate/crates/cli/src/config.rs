//! Effective configuration: defaults, then the `--config` file, then flags.

use std::path::{Path, PathBuf};

use lppgate_core::dataset::DatasetProfile;
use lppgate_core::features::FamilySet;
use lppgate_core::pipeline::PipelineConfig;
use lppgate_core::policy::TauGrid;
use lppgate_core::synth::SynthConfig;
use lppgate_gateway::RunnerConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    /// `openai-compatible` or `stub`.
    pub kind: String,
    pub base_url: String,
    pub model: String,
    pub timeout_secs: u64,
    /// JSONL fixture used when `kind` is `stub`.
    pub stub_fixture: Option<PathBuf>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: "openai-compatible".into(),
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4o-mini".into(),
            timeout_secs: 120,
            stub_fixture: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CliConfig {
    pub pipeline: PipelineConfig,
    pub synth: SynthConfig,
    pub gateway: RunnerConfig,
    pub provider: ProviderConfig,
}

/// Values given on the command line; `None` leaves the config untouched.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub cost_ratio: Option<f64>,
    pub tau_range: Option<String>,
    pub tau_step: Option<f64>,
    pub families: Option<String>,
    pub dataset_profile: Option<String>,
    pub provider: Option<String>,
    pub stub: Option<PathBuf>,
}

pub fn parse_tau_range(s: &str) -> CliResult<(f64, f64)> {
    let parts: Vec<&str> = s.split([',', ':']).map(str::trim).collect();
    let bad = || CliError::Usage(format!("--tau-range expects LO,HI, got `{s}`"));
    if parts.len() != 2 {
        return Err(bad());
    }
    let lo = parts[0].parse::<f64>().map_err(|_| bad())?;
    let hi = parts[1].parse::<f64>().map_err(|_| bad())?;
    Ok((lo, hi))
}

impl CliConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) if !p.exists() => Err(CliError::MissingInput(p.to_path_buf())),
            Some(p) => Ok(lppgate_core::io::read_json(p)?),
        }
    }

    pub fn apply(&mut self, o: &Overrides) -> CliResult<()> {
        if let Some(seed) = o.seed {
            self.pipeline.seed = seed;
            self.synth.seed = seed;
        }
        if let Some(r) = o.cost_ratio {
            self.pipeline.cost.c_rev = r * self.pipeline.cost.c_mis;
        }
        if let Some(s) = &o.tau_range {
            let (lo, hi) = parse_tau_range(s)?;
            self.pipeline.tau = TauGrid {
                lo,
                hi,
                ..self.pipeline.tau
            };
        }
        if let Some(step) = o.tau_step {
            self.pipeline.tau.step = step;
        }
        if let Some(f) = &o.families {
            self.pipeline.families = FamilySet::parse_list(f)?;
        }
        if let Some(p) = &o.dataset_profile {
            self.pipeline.profile = p.parse::<DatasetProfile>()?;
        }
        if let Some(p) = &o.provider {
            self.provider.kind = p.clone();
        }
        if let Some(s) = &o.stub {
            self.provider.kind = "stub".into();
            self.provider.stub_fixture = Some(s.clone());
        }
        self.validate()
    }

    pub fn validate(&self) -> CliResult<()> {
        self.pipeline.cost.validate()?;
        self.pipeline.tau.validate()?;
        self.synth.validate()?;
        if self.pipeline.families.is_empty() {
            return Err(lppgate_core::GateError::EmptyFamilySet.into());
        }
        if !matches!(self.provider.kind.as_str(), "openai-compatible" | "stub") {
            return Err(CliError::Usage(format!(
                "unknown provider `{}`",
                self.provider.kind
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let mut c: CliConfig = serde_json::from_str(
            r#"{"pipeline": {"seed": 7, "tau": {"lo": 0.3, "hi": 0.8, "step": 0.01}}}"#,
        )
        .unwrap();
        assert_eq!(c.pipeline.seed, 7);
        assert_eq!(c.pipeline.cost.c_rev, 0.64);
        c.apply(&Overrides {
            seed: Some(9),
            cost_ratio: Some(0.9),
            tau_range: Some("0.4,0.6".into()),
            ..Overrides::default()
        })
        .unwrap();
        assert_eq!(c.pipeline.seed, 9);
        assert_eq!(c.synth.seed, 9);
        assert_eq!(c.pipeline.cost.c_rev, 0.9);
        assert_eq!(
            (c.pipeline.tau.lo, c.pipeline.tau.hi, c.pipeline.tau.step),
            (0.4, 0.6, 0.01)
        );
    }

    #[test]
    fn defaults_carry_experiment_constants() {
        let c = CliConfig::default();
        assert_eq!(c.pipeline.seed, 42);
        assert_eq!(c.pipeline.feature_config.top_k, 5);
        assert_eq!(c.gateway.decoding.top_logprobs, 20);
        assert_eq!(
            (c.pipeline.tau.lo, c.pipeline.tau.hi, c.pipeline.tau.step),
            (0.35, 0.70, 0.005)
        );
        assert_eq!(c.pipeline.cost.ratio(), 0.64);
        assert_eq!(c.pipeline.grid.len(), 672);
    }

    #[test]
    fn bad_tau_range_is_a_usage_error() {
        assert!(matches!(parse_tau_range("0.3"), Err(CliError::Usage(_))));
        assert_eq!(parse_tau_range("0.3:0.6").unwrap(), (0.3, 0.6));
    }
}
