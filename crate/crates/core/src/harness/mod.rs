//! Evaluation engine: FAR/FRR sweeps in the raw and hashed domains, security
//! probes, protocol round trips and scripted multi-node scenarios.

mod protocol;
mod scenario;
mod security;

pub use protocol::{random_dob, random_gender, run_round_trip, RoundTripConfig, RoundTripReport, SetupConfigFile};
pub use scenario::{
    parse_script, run_scenario, NodeArgs, ScenarioConfig, Step, TickArgs, Transcript, TranscriptEntry, UserArgs,
};
pub use security::{run_security_suite, Check, SecurityConfig, SecurityReport};

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::biometric::{
    compute_global_mask, extract_feature_vector, min_shift_distance, synth_generate, BiometricError,
    FeatureVector, MaskingMode, NoiseMask, SynthParams, SyntheticDataset,
};
use crate::ledger::LedgerError;
use crate::lsh::{hash_hamming, sample_projections, LshError, DEFAULT_HASH_BITS};
use crate::passport::PassportError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error(transparent)]
    Biometric(#[from] BiometricError),
    #[error(transparent)]
    Lsh(#[from] LshError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Passport(#[from] PassportError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// True for errors caused by bad user input rather than a failed run.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Self::Validation(_)
                | Self::Biometric(BiometricError::InvalidParameter(_) | BiometricError::InvalidDimensions(..))
                | Self::Lsh(LshError::InvalidParameter(_) | LshError::ZeroSize { .. })
                | Self::Passport(PassportError::Validation(_))
                | Self::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Raw,
    #[default]
    Hashed,
}

impl std::str::FromStr for Domain {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Self::Raw),
            "hashed" => Ok(Self::Hashed),
            _ => Err(HarnessError::Validation(format!("unknown domain {s:?}"))),
        }
    }
}

/// Thresholds 0.25, 0.26, ..., 0.35.
pub fn default_thresholds() -> Vec<f64> {
    (25..=35).map(|i| i as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub thresholds: Vec<f64>,
    pub domain: Domain,
    pub dataset: SynthParams,
    /// Independent dataset/projection draws whose comparisons are pooled.
    pub trials: usize,
    /// Impostor pairs are capped at this multiple of the genuine pair count.
    pub impostor_cap: usize,
    pub hash_bits: usize,
    pub max_shifts: usize,
    pub masking_mode: MaskingMode,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            thresholds: default_thresholds(),
            domain: Domain::Hashed,
            dataset: SynthParams::default(),
            trials: 1,
            impostor_cap: 10,
            hash_bits: DEFAULT_HASH_BITS,
            max_shifts: crate::biometric::DEFAULT_MAX_SHIFTS,
            masking_mode: MaskingMode::Type1,
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() {
            return Err(HarnessError::Validation("no thresholds given".into()));
        }
        if self.thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(HarnessError::Validation("thresholds must lie in [0, 1]".into()));
        }
        if self.thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HarnessError::Validation("thresholds must be strictly ascending".into()));
        }
        if self.trials == 0 {
            return Err(HarnessError::Validation("trials must be at least 1".into()));
        }
        if self.impostor_cap == 0 {
            return Err(HarnessError::Validation("impostor cap must be at least 1".into()));
        }
        self.dataset.validate()?;
        if self.dataset.samples_per_subject < 2 || self.dataset.subjects < 2 {
            return Err(HarnessError::Validation(
                "need at least 2 subjects with 2 samples each for both pair classes".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FarFrrRow {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
    pub genuine_comparisons: usize,
    pub impostor_comparisons: usize,
}

/// Genuine and impostor pair counts before any cap.
pub fn pair_counts(subjects: usize, samples: usize) -> (usize, usize) {
    let genuine = subjects * samples * samples.saturating_sub(1) / 2;
    let impostor = subjects * subjects.saturating_sub(1) / 2 * samples * samples;
    (genuine, impostor)
}

/// `(subject, sample)` indices of the two sides of a comparison.
pub type SamplePair = ((usize, usize), (usize, usize));

type Scorer<'a> = dyn Fn(&(usize, usize), &(usize, usize)) -> Result<f64> + Sync + 'a;

/// `(subject, sample)` index pairs: all genuine pairs, and a seeded uniform
/// subsample of impostor pairs without replacement.
pub fn comparison_pairs(
    subjects: usize,
    samples: usize,
    impostor_cap: usize,
    seed: u64,
) -> (Vec<SamplePair>, Vec<SamplePair>) {
    let mut genuine = Vec::new();
    for s in 0..subjects {
        for a in 0..samples {
            for b in a + 1..samples {
                genuine.push(((s, a), (s, b)));
            }
        }
    }
    let subject_pairs: Vec<(usize, usize)> =
        (0..subjects).flat_map(|s| (s + 1..subjects).map(move |t| (s, t))).collect();
    let per = samples * samples;
    let total = subject_pairs.len() * per;
    let take = total.min(genuine.len() * impostor_cap);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = index::sample(&mut rng, total, take).into_vec();
    picks.sort_unstable();
    let impostor = picks
        .into_iter()
        .map(|i| {
            let (s, t) = subject_pairs[i / per];
            let (a, b) = (i % per / samples, i % samples);
            ((s, a), (t, b))
        })
        .collect();
    (genuine, impostor)
}

fn feature_vectors(data: &SyntheticDataset, mode: MaskingMode) -> Result<Vec<Vec<FeatureVector>>> {
    let global = match mode {
        MaskingMode::Type1 => None,
        MaskingMode::Type2 => Some(compute_global_mask(data.iter().map(|(_, _, s)| &s.mask))?),
    };
    let global: Option<&NoiseMask> = global.as_ref();
    data.subjects
        .par_iter()
        .map(|samples| {
            samples
                .iter()
                .map(|s| Ok(extract_feature_vector(&s.template, &s.mask, mode, global)?))
                .collect()
        })
        .collect()
}

/// Sorted genuine and impostor distances of one trial.
fn score_trial(cfg: &EvalConfig, trial: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let dataset = SynthParams {
        seed: cfg.dataset.seed.wrapping_add(trial as u64),
        ..cfg.dataset.clone()
    };
    let data = synth_generate(&dataset)?;
    let fvs = feature_vectors(&data, cfg.masking_mode)?;
    let trial_seed = cfg.seed.wrapping_add(trial as u64);
    let (genuine, impostor) =
        comparison_pairs(dataset.subjects, dataset.samples_per_subject, cfg.impostor_cap, trial_seed);
    let score: Box<Scorer<'_>> = match cfg.domain {
        Domain::Raw => {
            let max_shifts = cfg.max_shifts;
            let fvs = &fvs;
            Box::new(move |a, b| Ok(min_shift_distance(&fvs[a.0][a.1], &fvs[b.0][b.1], max_shifts)?))
        }
        Domain::Hashed => {
            let r = sample_projections(dataset.dims.len(), cfg.hash_bits, trial_seed)?;
            let hashes: Vec<Vec<_>> = fvs
                .par_iter()
                .map(|row| row.iter().map(|fv| r.hash_bits(fv.bits())).collect::<std::result::Result<_, _>>())
                .collect::<std::result::Result<_, _>>()?;
            Box::new(move |a, b| Ok(hash_hamming(&hashes[a.0][a.1], &hashes[b.0][b.1])?))
        }
    };
    let mut g: Vec<f64> = genuine.par_iter().map(|(a, b)| score(a, b)).collect::<Result<_>>()?;
    let mut i: Vec<f64> = impostor.par_iter().map(|(a, b)| score(a, b)).collect::<Result<_>>()?;
    g.sort_by(f64::total_cmp);
    i.sort_by(f64::total_cmp);
    Ok((g, i))
}

fn percent(count: usize, total: usize) -> f64 {
    (100_000.0 * count as f64 / total as f64).round() / 1000.0
}

/// Builds rows from sorted distances. Acceptance is `distance < threshold`.
pub fn rows_from_distances(thresholds: &[f64], genuine: &[f64], impostor: &[f64]) -> Vec<FarFrrRow> {
    thresholds
        .iter()
        .map(|&t| {
            let accepted_impostors = impostor.partition_point(|&d| d < t);
            let rejected_genuine = genuine.len() - genuine.partition_point(|&d| d < t);
            FarFrrRow {
                threshold: t,
                far: percent(accepted_impostors, impostor.len()),
                frr: percent(rejected_genuine, genuine.len()),
                genuine_comparisons: genuine.len(),
                impostor_comparisons: impostor.len(),
            }
        })
        .collect()
}

pub fn run_far_frr(cfg: &EvalConfig) -> Result<Vec<FarFrrRow>> {
    cfg.validate()?;
    let (mut genuine, mut impostor) = (Vec::new(), Vec::new());
    for trial in 0..cfg.trials {
        let (g, i) = score_trial(cfg, trial)?;
        genuine.extend(g);
        impostor.extend(i);
    }
    if genuine.is_empty() || impostor.is_empty() {
        return Err(HarnessError::Validation("dataset yields no genuine or no impostor pairs".into()));
    }
    genuine.sort_by(f64::total_cmp);
    impostor.sort_by(f64::total_cmp);
    Ok(rows_from_distances(&cfg.thresholds, &genuine, &impostor))
}

/// Both domains on the same dataset and thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainComparison {
    pub raw: Vec<FarFrrRow>,
    pub hashed: Vec<FarFrrRow>,
    pub raw_crossover: Option<f64>,
    pub hashed_crossover: Option<f64>,
}

pub fn run_raw_baseline(cfg: &EvalConfig) -> Result<DomainComparison> {
    let raw = run_far_frr(&EvalConfig {
        domain: Domain::Raw,
        ..cfg.clone()
    })?;
    let hashed = run_far_frr(&EvalConfig {
        domain: Domain::Hashed,
        ..cfg.clone()
    })?;
    Ok(DomainComparison {
        raw_crossover: crossover(&raw),
        hashed_crossover: crossover(&hashed),
        raw,
        hashed,
    })
}

/// Threshold where FAR meets FRR, linearly interpolated between rows; `None`
/// when the curves do not cross inside the sweep.
pub fn crossover(rows: &[FarFrrRow]) -> Option<f64> {
    let diff = |r: &FarFrrRow| r.far - r.frr;
    let first = rows.first()?;
    if diff(first) >= 0.0 {
        return (diff(first) == 0.0).then_some(first.threshold);
    }
    rows.windows(2).find(|w| diff(&w[1]) >= 0.0).map(|w| {
        let (d0, d1) = (diff(&w[0]), diff(&w[1]));
        w[0].threshold + (w[1].threshold - w[0].threshold) * (-d0) / (d1 - d0)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Csv,
    Jsonl,
}

impl std::str::FromStr for ReportFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "jsonl" => Ok(Self::Jsonl),
            _ => Err(HarnessError::Validation(format!("unknown report format {s:?}"))),
        }
    }
}

const CSV_HEADER: [&str; 5] = ["threshold", "far", "frr", "genuineComparisons", "impostorComparisons"];

pub fn write_report<W: Write>(rows: &[FarFrrRow], mut w: W, format: ReportFormat) -> Result<()> {
    match format {
        ReportFormat::Csv => {
            let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(w);
            csv.write_record(CSV_HEADER)?;
            for r in rows {
                csv.serialize(r)?;
            }
            csv.flush()?;
        }
        ReportFormat::Jsonl => {
            for r in rows {
                serde_json::to_writer(&mut w, r)?;
                w.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

pub fn read_report<R: Read>(r: R, format: ReportFormat) -> Result<Vec<FarFrrRow>> {
    match format {
        ReportFormat::Csv => {
            let mut csv = csv::Reader::from_reader(r);
            let header = csv.headers()?.clone();
            if header.iter().ne(CSV_HEADER) {
                return Err(HarnessError::Validation("unexpected report header".into()));
            }
            Ok(csv.deserialize().collect::<std::result::Result<_, _>>()?)
        }
        ReportFormat::Jsonl => {
            let text = std::io::read_to_string(r)?;
            text.lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| Ok(serde_json::from_str(l)?))
                .collect()
        }
    }
}

pub fn export_report(rows: &[FarFrrRow], path: &Path, format: ReportFormat) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_report(rows, &mut w, format)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests;
