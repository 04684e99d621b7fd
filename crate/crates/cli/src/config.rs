use std::path::Path;

use anyhow::Context;
use irischain::biometric::SynthParams;
use irischain::harness::{EvalConfig, RoundTripConfig, ScenarioConfig, SecurityConfig};
use serde::Deserialize;

/// Optional TOML file given with `--config`. Every section is optional and
/// command-line flags override what it sets.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub synth: SynthParams,
    pub eval: EvalConfig,
    pub security: SecurityConfig,
    pub round_trip: RoundTripConfig,
    pub scenario: ScenarioConfig,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text)
            .map_err(|e| crate::Failure::Validation(format!("config {}: {e}", path.display())).into())
    }
}
