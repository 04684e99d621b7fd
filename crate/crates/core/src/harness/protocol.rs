use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Result;
use crate::biometric::{extract_feature_vector, synth_generate, SynthParams};
use crate::ledger::{encode_hscan, keygen, Ledger, LedgerConfig, RecPayload, SharedLedger, TxType};
use crate::passport::{PassportNode, PassportParams, SetupConfig, DEFAULT_THRESHOLD, MAX_HSCAN_DELAY};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoundTripConfig {
    pub runs: usize,
    pub users_per_run: usize,
    pub parties: usize,
    /// Noise between the enrolment scan and the re-scan.
    pub p_intra: f64,
    pub setup: SetupConfigFile,
    pub seed: u64,
}

/// The subset of setup options exposed in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SetupConfigFile {
    pub threshold: f64,
    pub hash_bits: usize,
    pub shift_search: bool,
}

impl Default for SetupConfigFile {
    fn default() -> Self {
        let d = SetupConfig::default();
        Self {
            threshold: d.threshold,
            hash_bits: d.hash_bits,
            shift_search: d.biometric.shift_search,
        }
    }
}

impl SetupConfigFile {
    pub fn to_setup(&self) -> SetupConfig {
        let mut cfg = SetupConfig {
            threshold: self.threshold,
            hash_bits: self.hash_bits,
            ..SetupConfig::default()
        };
        cfg.biometric.shift_search = self.shift_search;
        cfg
    }
}

impl Default for RoundTripConfig {
    fn default() -> Self {
        Self {
            runs: 100,
            users_per_run: 5,
            parties: 3,
            p_intra: 0.05,
            setup: SetupConfigFile {
                threshold: DEFAULT_THRESHOLD,
                ..SetupConfigFile::default()
            },
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundTripReport {
    pub runs: usize,
    pub users: usize,
    /// Identical-scan authentications returning the enrolled ID.
    pub exact_successes: usize,
    /// Noisy re-scan authentications returning the enrolled ID.
    pub noisy_successes: usize,
    /// Authentications that returned some other user's ID.
    pub wrong_ids: usize,
    /// Noisy authentications where more than one candidate mapped to a known ID.
    pub multi_matches: usize,
    /// Users whose 'rec' and 'hscan' transactions landed in different blocks.
    pub separated: usize,
    pub min_gap: u64,
    pub max_gap: u64,
}

impl RoundTripReport {
    pub fn exact_rate(&self) -> f64 {
        self.exact_successes as f64 / self.users as f64
    }

    pub fn noisy_rate(&self) -> f64 {
        self.noisy_successes as f64 / self.users as f64
    }

    fn merge(mut self, o: Self) -> Self {
        self.runs += o.runs;
        self.users += o.users;
        self.exact_successes += o.exact_successes;
        self.noisy_successes += o.noisy_successes;
        self.wrong_ids += o.wrong_ids;
        self.multi_matches += o.multi_matches;
        self.separated += o.separated;
        self.min_gap = self.min_gap.min(o.min_gap);
        self.max_gap = self.max_gap.max(o.max_gap);
        self
    }
}

pub fn random_dob<R: Rng>(rng: &mut R) -> String {
    format!(
        "{:02}/{:02}/{}",
        rng.gen_range(1..=28),
        rng.gen_range(1..=12),
        rng.gen_range(1930..=2015)
    )
}

pub fn random_gender<R: Rng>(rng: &mut R) -> &'static str {
    ["male", "female", "other"][rng.gen_range(0..3)]
}

/// Enrols fresh users on a fresh chain, lets every delayed hash land, then
/// authenticates each with the enrolment scan and with a noisy re-scan.
pub fn run_round_trip(cfg: &RoundTripConfig) -> Result<RoundTripReport> {
    if cfg.runs == 0 || cfg.users_per_run == 0 || cfg.parties == 0 {
        return Err(super::HarnessError::Validation("runs, users and parties must be positive".into()));
    }
    let per_run = (0..cfg.runs)
        .into_par_iter()
        .map(|run| one_run(cfg, cfg.seed.wrapping_add(run as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(per_run
        .into_iter()
        .fold(
            RoundTripReport {
                min_gap: u64::MAX,
                ..RoundTripReport::default()
            },
            RoundTripReport::merge,
        ))
}

fn one_run(cfg: &RoundTripConfig, seed: u64) -> Result<RoundTripReport> {
    let params = PassportParams::setup(seed, cfg.setup.to_setup())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let keys: Vec<_> = (0..cfg.parties)
        .map(|i| keygen(format!("party-{i}").as_str(), &mut rng))
        .collect();
    let chain = SharedLedger::new(Ledger::new(
        keys.iter().map(|(_, p)| p.clone()).collect(),
        LedgerConfig::default(),
    )?);
    let data = synth_generate(&SynthParams {
        dims: params.biometric.dims,
        subjects: cfg.users_per_run,
        samples_per_subject: 2,
        p_intra: cfg.p_intra,
        seed,
        ..SynthParams::default()
    })?;
    let mut node = PassportNode::new(params.clone(), chain.clone(), seed)?;

    let mut users = Vec::new();
    for (u, samples) in data.subjects.iter().enumerate() {
        let dob = random_dob(&mut rng);
        let gender = random_gender(&mut rng);
        let (sk, party) = &keys[u % keys.len()];
        let rec = crate::passport::VaccinationRecord::new("comirnaty", 1, "2021-06-01", &party.id.0);
        let id = node.enroll(&party.id, sk, &dob, gender, &samples[0], &rec)?;
        users.push((id, dob, gender));
    }
    chain.ticks(MAX_HSCAN_DELAY + 1);

    let mut report = RoundTripReport {
        runs: 1,
        users: users.len(),
        min_gap: u64::MAX,
        ..RoundTripReport::default()
    };
    for (u, (id, dob, gender)) in users.iter().enumerate() {
        let samples = &data.subjects[u];
        match node.authenticate(dob, gender, &samples[0])? {
            Some(got) if got == *id => report.exact_successes += 1,
            Some(_) => report.wrong_ids += 1,
            None => {}
        }
        let noisy = node.authenticate_detailed(dob, gender, &samples[1])?;
        match noisy.id {
            Some(got) if got == *id => report.noisy_successes += 1,
            Some(_) => report.wrong_ids += 1,
            None => {}
        }
        if noisy.matching_candidates > 1 {
            report.multi_matches += 1;
        }

        let fv = extract_feature_vector(
            &samples[0].template,
            &samples[0].mask,
            params.biometric.masking_mode,
            params.global_mask.as_ref(),
        )?;
        let hscan = encode_hscan(&params.projections.hash_bits(fv.bits())?);
        let l = chain.read();
        let find = |pred: &dyn Fn(&crate::ledger::Transaction) -> bool| {
            l.blocks().iter().find(|b| b.transactions.iter().any(pred)).map(|b| b.height)
        };
        let rec_h = find(&|t| {
            t.tx_type == TxType::Rec && RecPayload::decode(&t.payload).is_ok_and(|p| p.id == id.0)
        });
        let hs_h = find(&|t| t.tx_type == TxType::Hscan && t.payload == hscan);
        if let (Some(r), Some(h)) = (rec_h, hs_h) {
            if r != h {
                report.separated += 1;
            }
            let gap = h.abs_diff(r);
            report.min_gap = report.min_gap.min(gap);
            report.max_gap = report.max_gap.max(gap);
        }
    }
    Ok(report)
}
