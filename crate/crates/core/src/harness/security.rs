use serde::{Deserialize, Serialize};

use super::{feature_vectors, HarnessError, Result};
use crate::biometric::{synth_generate, MaskingMode, SynthParams};
use crate::lsh::{
    bit_balance_advantage, entropy_estimate, preimage_census, BitBalanceReport, CensusReport, ProjectionSet,
    SecurityParams, DEFAULT_LAMBDA,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SecurityConfig {
    pub trials: usize,
    pub seed: u64,
    pub advantage_bound: f64,
    pub census_n: usize,
    pub census_m: usize,
    pub census_trials: usize,
    /// The census median must lie within this factor of `2^(n - m)`.
    pub census_factor: f64,
    pub lambda: usize,
    /// Source of the samples the entropy estimate runs on.
    pub dataset: SynthParams,
    pub masking_mode: MaskingMode,
}

impl Default for SecurityConfig {
    fn default() -> Self {
        Self {
            trials: 5000,
            seed: 0,
            advantage_bound: 0.05,
            census_n: 12,
            census_m: 4,
            census_trials: 50,
            census_factor: 4.0,
            lambda: DEFAULT_LAMBDA,
            dataset: SynthParams::default(),
            masking_mode: MaskingMode::Type1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecurityReport {
    pub bit_balance: BitBalanceReport,
    pub census: CensusReport,
    /// Sum of marginal bit entropies; an upper bound on the true entropy.
    pub entropy_upper_bound: f64,
    pub security: SecurityParams,
    pub degenerate: bool,
    pub checks: Vec<Check>,
}

impl SecurityReport {
    pub fn passed(&self) -> bool {
        !self.degenerate && self.checks.iter().all(|c| c.passed)
    }
}

/// Bit-balance advantage of `r`, a preimage census at small size, and the
/// entropy of the configured dataset against `m + lambda`.
pub fn run_security_suite(r: &ProjectionSet, cfg: &SecurityConfig) -> Result<SecurityReport> {
    if cfg.dataset.dims.len() != r.n() {
        return Err(HarnessError::Validation(format!(
            "dataset vectors have {} bits, projections expect {}",
            cfg.dataset.dims.len(),
            r.n()
        )));
    }
    let bit_balance = bit_balance_advantage(r, cfg.trials, cfg.seed)?;
    let census = preimage_census(cfg.census_n, cfg.census_m, cfg.census_trials, cfg.seed)?;
    let data = synth_generate(&cfg.dataset)?;
    let samples: Vec<_> = feature_vectors(&data, cfg.masking_mode)?
        .into_iter()
        .flatten()
        .map(|fv| fv.into_bits())
        .collect();
    let entropy = entropy_estimate(&samples)?;
    let security = SecurityParams::new(cfg.lambda, r.m(), entropy);

    let checks = vec![
        Check {
            name: "max single-bit advantage".into(),
            value: bit_balance.max_advantage,
            bound: format!("< {}", cfg.advantage_bound),
            passed: bit_balance.max_advantage < cfg.advantage_bound,
        },
        Check {
            name: "census median preimages".into(),
            value: census.median,
            bound: format!("within x{} of {}", cfg.census_factor, census.expected),
            passed: census.median_within_factor(cfg.census_factor),
        },
        Check {
            name: "entropy upper bound".into(),
            value: entropy,
            bound: format!(">= m + lambda = {}", r.m() + cfg.lambda),
            passed: security.input_hiding,
        },
    ];
    Ok(SecurityReport {
        degenerate: bit_balance.degenerate,
        bit_balance,
        census,
        entropy_upper_bound: entropy,
        security,
        checks,
    })
}
