use std::sync::Arc;

use hmac::{Hmac, Mac};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use super::{PassportError, Result, UserId};
use crate::biometric::{decode_matrix_records, encode_matrix_record, BiometricConfig, NoiseMask};
use crate::ledger::Writer;
use crate::lsh::{sample_projections, HashVector, ProjectionSet, DEFAULT_HASH_BITS, DEFAULT_LAMBDA};

pub const DEFAULT_THRESHOLD: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct SetupConfig {
    pub lambda: usize,
    pub hash_bits: usize,
    pub threshold: f64,
    pub biometric: BiometricConfig,
    pub global_mask: Option<NoiseMask>,
}

impl Default for SetupConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            hash_bits: DEFAULT_HASH_BITS,
            threshold: DEFAULT_THRESHOLD,
            biometric: BiometricConfig::default(),
            global_mask: None,
        }
    }
}

/// System-wide public parameters: the keyed outer hash, the projection set of
/// the locality-sensitive inner hash, and the match threshold.
#[derive(Debug, Clone)]
pub struct PassportParams {
    pub h1_key: [u8; 32],
    pub projections: Arc<ProjectionSet>,
    pub threshold: f64,
    pub lambda: usize,
    pub system_seed: u64,
    pub biometric: BiometricConfig,
    pub global_mask: Option<NoiseMask>,
}

impl PassportParams {
    /// Derives every parameter from `seed`. The projection set uses `seed`
    /// directly; the outer-hash key comes from a separate ChaCha stream.
    pub fn setup(seed: u64, cfg: SetupConfig) -> Result<Self> {
        if !(cfg.threshold > 0.0 && cfg.threshold < 1.0) {
            return Err(PassportError::Validation(format!(
                "threshold must lie strictly between 0 and 1, got {}",
                cfg.threshold
            )));
        }
        if let Some(g) = &cfg.global_mask {
            if g.dims() != cfg.biometric.dims {
                return Err(PassportError::Validation("global mask dimensions differ from config".into()));
            }
        }
        let projections = sample_projections(cfg.biometric.dims.len(), cfg.hash_bits, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let mut h1_key = [0u8; 32];
        rng.fill_bytes(&mut h1_key);
        Ok(Self {
            h1_key,
            projections: Arc::new(projections),
            threshold: cfg.threshold,
            lambda: cfg.lambda,
            system_seed: seed,
            biometric: cfg.biometric,
            global_mask: cfg.global_mask,
        })
    }

    pub fn hash_bits(&self) -> usize {
        self.projections.m()
    }

    pub fn to_file(&self) -> ParamsFile {
        ParamsFile {
            h1_key: hex::encode(self.h1_key),
            projection_seed: self.system_seed,
            hash_bits: self.hash_bits(),
            threshold: self.threshold,
            lambda: self.lambda,
            biometric: self.biometric.clone(),
            global_mask: self.global_mask.as_ref().map(|m| encode_matrix_record(&m.0)),
        }
    }

    pub fn from_file(f: &ParamsFile) -> Result<Self> {
        let key = hex::decode(&f.h1_key).map_err(|e| PassportError::Validation(e.to_string()))?;
        let h1_key: [u8; 32] = key
            .try_into()
            .map_err(|_| PassportError::Validation("h1 key must be 32 bytes".into()))?;
        let global_mask = match &f.global_mask {
            None => None,
            Some(text) => {
                let mut v = decode_matrix_records(text)?;
                if v.len() != 1 {
                    return Err(PassportError::Validation("expected one global mask".into()));
                }
                Some(NoiseMask(v.remove(0)))
            }
        };
        let mut p = Self::setup(
            f.projection_seed,
            SetupConfig {
                lambda: f.lambda,
                hash_bits: f.hash_bits,
                threshold: f.threshold,
                biometric: f.biometric.clone(),
                global_mask,
            },
        )?;
        p.h1_key = h1_key;
        Ok(p)
    }
}

/// On-disk parameters. The projection set is regenerated from its seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub h1_key: String,
    pub projection_seed: u64,
    pub hash_bits: usize,
    pub threshold: f64,
    pub lambda: usize,
    pub biometric: BiometricConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global_mask: Option<String>,
}

const GENDERS: [&str; 3] = ["male", "female", "other"];

pub fn validate_dob(dob: &str) -> Result<()> {
    let shape_ok = dob.len() == 10
        && dob.bytes().enumerate().all(|(i, b)| if i == 2 || i == 5 { b == b'/' } else { b.is_ascii_digit() });
    if !shape_ok || chrono::NaiveDate::parse_from_str(dob, "%d/%m/%Y").is_err() {
        return Err(PassportError::Validation(format!("date of birth {dob:?} is not dd/mm/yyyy")));
    }
    Ok(())
}

pub fn validate_gender(gender: &str) -> Result<()> {
    if !GENDERS.contains(&gender) {
        return Err(PassportError::Validation(format!(
            "gender {gender:?} is not one of male/female/other"
        )));
    }
    Ok(())
}

/// Keyed 256-bit digest over the length-prefixed fields
/// `dob`, `gender`, `hscan`.
pub fn compute_id(params: &PassportParams, dob: &str, gender: &str, hscan: &HashVector) -> Result<UserId> {
    validate_dob(dob)?;
    validate_gender(gender)?;
    let mut w = Writer::new();
    w.str(dob).str(gender).u32(hscan.len() as u32).bytes(&hscan.to_bytes());
    let mut mac = <Hmac<Sha256> as Mac>::new_from_slice(&params.h1_key).expect("hmac accepts any key length");
    mac.update(&w.finish());
    Ok(UserId(mac.finalize().into_bytes().into()))
}
