//! The passport protocol: enrolment, authentication and record keeping on top
//! of the permissioned ledger.
//!
//! A user's identifier is a keyed digest of date of birth, gender and the
//! locality-sensitive hash of their iris feature vector. The hash itself is
//! published once, anonymously and after a random delay; records are published
//! as signed `(ID, record)` pairs. Re-identification scans the published hashes
//! for near matches and recomputes the identifier from each candidate.

mod params;
mod record;

pub use params::{
    compute_id, validate_dob, validate_gender, ParamsFile, PassportParams, SetupConfig,
    DEFAULT_THRESHOLD,
};
pub use record::VaccinationRecord;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::biometric::{extract_feature_vector, rotate, BiometricError, Sample};
use crate::ledger::{
    decode_hscan, encode_hscan, Blockchain, Digest, LedgerError, PartyId, RecPayload, SecretKey,
    Transaction, TxType, Writer,
};
use crate::lsh::{hash_hamming, HashVector, LshError};

/// An iris capture: template plus noise mask.
pub type Scan = Sample;

/// Largest random delay, in ticks, before a hash is published.
pub const MAX_HSCAN_DELAY: u64 = 100;

#[derive(Debug, Error)]
pub enum PassportError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("user {0} is already enrolled")]
    DuplicateEnrollment(UserId),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Biometric(#[from] BiometricError),
    #[error(transparent)]
    Lsh(#[from] LshError),
}

pub type Result<T> = std::result::Result<T, PassportError>;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UserId(pub Digest);

impl UserId {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "UserId({}..)", &self.to_hex()[..12])
    }
}

/// Everything a node has learned from blocks `[0, num_blocks)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PassportState {
    pub num_blocks: u64,
    pub ids: BTreeSet<UserId>,
    /// Records per user, in chain order.
    pub records: BTreeMap<UserId, Vec<VaccinationRecord>>,
    pub hscans: BTreeSet<HashVector>,
}

impl PassportState {
    /// All `(ID, record)` pairs as a sorted multiset.
    pub fn record_multiset(&self) -> Vec<(UserId, VaccinationRecord)> {
        let mut v: Vec<_> = self
            .records
            .iter()
            .flat_map(|(id, rs)| rs.iter().map(move |r| (*id, r.clone())))
            .collect();
        v.sort();
        v
    }

    /// Digest over `(ids, records, hscans)`, independent of insertion order.
    pub fn digest(&self) -> Digest {
        let mut w = Writer::new();
        w.u32(self.ids.len() as u32);
        for id in &self.ids {
            w.fixed(&id.0);
        }
        let records = self.record_multiset();
        w.u32(records.len() as u32);
        for (id, r) in &records {
            w.fixed(&id.0).bytes(&r.encode());
        }
        w.u32(self.hscans.len() as u32);
        for h in &self.hscans {
            w.bytes(&h.to_bytes());
        }
        Sha256::digest(w.finish()).into()
    }

    fn same_content(&self, other: &Self) -> bool {
        self.ids == other.ids && self.record_multiset() == other.record_multiset() && self.hscans == other.hscans
    }
}

/// Local writes not yet seen on chain. Each entry is retired when sync meets
/// the matching transaction, so the merged view never double counts.
#[derive(Debug, Clone, Default)]
struct Pending {
    records: Vec<(UserId, VaccinationRecord)>,
    hscans: BTreeSet<HashVector>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MatchPath {
    Exact,
    Candidate { distance: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuthOutcome {
    pub id: Option<UserId>,
    pub path: Option<MatchPath>,
    /// Stored hashes closer than the threshold.
    pub candidates_within: usize,
    /// Of those, how many map to a known identifier for these demographics.
    pub matching_candidates: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AddOutcome {
    Enrolled(UserId),
    Appended(UserId),
}

impl AddOutcome {
    pub fn id(&self) -> UserId {
        match self {
            Self::Enrolled(id) | Self::Appended(id) => *id,
        }
    }
}

/// One protocol participant attached to a chain.
pub struct PassportNode<B: Blockchain> {
    params: PassportParams,
    chain: B,
    state: PassportState,
    pending: Pending,
    rng: ChaCha8Rng,
}

impl<B: Blockchain> PassportNode<B> {
    /// Starts from an empty state and syncs. `delay_seed` drives the random
    /// publication delays of this node's enrolments.
    pub fn new(params: PassportParams, chain: B, delay_seed: u64) -> Result<Self> {
        let mut node = Self {
            params,
            chain,
            state: PassportState::default(),
            pending: Pending::default(),
            rng: ChaCha8Rng::seed_from_u64(delay_seed),
        };
        node.sync()?;
        Ok(node)
    }

    pub fn params(&self) -> &PassportParams {
        &self.params
    }

    pub fn chain(&self) -> &B {
        &self.chain
    }

    /// State derived from the chain alone.
    pub fn committed(&self) -> &PassportState {
        &self.state
    }

    /// Chain state merged with this node's unconfirmed writes.
    pub fn view(&self) -> PassportState {
        let mut v = self.state.clone();
        for (id, r) in &self.pending.records {
            v.ids.insert(*id);
            v.records.entry(*id).or_default().push(r.clone());
        }
        v.hscans.extend(self.pending.hscans.iter().cloned());
        v
    }

    pub fn has_pending(&self) -> bool {
        !self.pending.records.is_empty() || !self.pending.hscans.is_empty()
    }

    fn known_id(&self, id: &UserId) -> bool {
        self.state.ids.contains(id) || self.pending.records.iter().any(|(p, _)| p == id)
    }

    fn stored_hashes(&self) -> impl Iterator<Item = &HashVector> {
        let extra = self.pending.hscans.iter().filter(|h| !self.state.hscans.contains(*h));
        self.state.hscans.iter().chain(extra)
    }

    /// Pulls every block past `num_blocks` and folds its transactions into
    /// the state. Undecodable payloads are logged and skipped.
    pub fn sync(&mut self) -> Result<&PassportState> {
        let new_num = self.chain.get_num_blocks()?;
        for i in self.state.num_blocks..new_num {
            let block = self.chain.retrieve_block(i)?;
            for tx in &block.transactions {
                match tx.tx_type {
                    TxType::Rec => match decode_rec(&tx.payload) {
                        Ok((id, record)) => {
                            if let Some(pos) = self.pending.records.iter().position(|p| p == &(id, record.clone())) {
                                self.pending.records.remove(pos);
                            }
                            self.state.ids.insert(id);
                            self.state.records.entry(id).or_default().push(record);
                        }
                        Err(e) => warn!("block {i}: skipping malformed rec transaction: {e}"),
                    },
                    TxType::Hscan => match decode_hscan(&tx.payload) {
                        Ok(h) => {
                            self.pending.hscans.remove(&h);
                            self.state.hscans.insert(h);
                        }
                        Err(e) => warn!("block {i}: skipping malformed hscan transaction: {e}"),
                    },
                    TxType::Cert => {}
                }
            }
        }
        self.state.num_blocks = self.state.num_blocks.max(new_num);
        Ok(&self.state)
    }

    /// Hashes of the scan to compare against stored hashes: the scan itself,
    /// then (with shift search on) its rotations by increasing magnitude.
    fn probe_hashes(&self, scan: &Scan) -> Result<Vec<HashVector>> {
        let fv = extract_feature_vector(
            &scan.template,
            &scan.mask,
            self.params.biometric.masking_mode,
            self.params.global_mask.as_ref(),
        )?;
        if fv.len() != self.params.projections.n() {
            return Err(PassportError::Validation(format!(
                "scan yields {} bits, parameters expect {}",
                fv.len(),
                self.params.projections.n()
            )));
        }
        let mut shifts = vec![0isize];
        if self.params.biometric.shift_search {
            for s in 1..=self.params.biometric.max_shifts as isize {
                shifts.extend([-s, s]);
            }
        }
        shifts
            .into_iter()
            .map(|s| Ok(self.params.projections.hash_bits(rotate(&fv, s).bits())?))
            .collect()
    }

    pub fn authenticate(&mut self, dob: &str, gender: &str, scan: &Scan) -> Result<Option<UserId>> {
        Ok(self.authenticate_detailed(dob, gender, scan)?.id)
    }

    /// Exact identifier first; otherwise stored hashes within the threshold,
    /// closest first, until one maps to a known identifier.
    pub fn authenticate_detailed(&mut self, dob: &str, gender: &str, scan: &Scan) -> Result<AuthOutcome> {
        validate_dob(dob)?;
        validate_gender(gender)?;
        self.sync()?;
        let probes = self.probe_hashes(scan)?;
        for h in &probes {
            let id = compute_id(&self.params, dob, gender, h)?;
            if self.known_id(&id) {
                return Ok(AuthOutcome {
                    id: Some(id),
                    path: Some(MatchPath::Exact),
                    candidates_within: 0,
                    matching_candidates: 0,
                });
            }
        }
        let mut candidates: Vec<(f64, &HashVector)> = Vec::new();
        for h in self.stored_hashes() {
            let mut best = f64::INFINITY;
            for p in &probes {
                best = best.min(hash_hamming(p, h)?);
            }
            if best < self.params.threshold {
                candidates.push((best, h));
            }
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
        let mut outcome = AuthOutcome {
            id: None,
            path: None,
            candidates_within: candidates.len(),
            matching_candidates: 0,
        };
        for (d, h) in candidates {
            let id = compute_id(&self.params, dob, gender, h)?;
            if self.known_id(&id) {
                outcome.matching_candidates += 1;
                if outcome.id.is_none() {
                    outcome.id = Some(id);
                    outcome.path = Some(MatchPath::Candidate { distance: d });
                }
            }
        }
        Ok(outcome)
    }

    /// Publishes a signed record for a new user and queues the anonymous hash
    /// after a delay drawn uniformly from `1..=100` ticks.
    pub fn enroll(
        &mut self,
        party: &PartyId,
        sk: &SecretKey,
        dob: &str,
        gender: &str,
        scan: &Scan,
        init_record: &VaccinationRecord,
    ) -> Result<UserId> {
        init_record.validate()?;
        self.sync()?;
        let hscan = self
            .probe_hashes(scan)?
            .into_iter()
            .next()
            .expect("probe set always holds the unrotated scan");
        let id = compute_id(&self.params, dob, gender, &hscan)?;
        if self.known_id(&id) {
            return Err(PassportError::DuplicateEnrollment(id));
        }
        self.publish_record(party, sk, id, init_record)?;
        let delay = self.rng.gen_range(1..=MAX_HSCAN_DELAY);
        self.chain
            .anon_broadcast(sk, Transaction::anonymous(TxType::Hscan, encode_hscan(&hscan)), delay)?;
        self.pending.hscans.insert(hscan);
        Ok(id)
    }

    fn publish_record(&mut self, party: &PartyId, sk: &SecretKey, id: UserId, record: &VaccinationRecord) -> Result<()> {
        let payload = RecPayload {
            id: id.0,
            record: record.encode(),
        }
        .encode();
        self.chain
            .broadcast(party, sk, Transaction::signed(TxType::Rec, payload, party, sk))?;
        self.pending.records.push((id, record.clone()));
        Ok(())
    }

    /// Appends `record` for a known user, or enrols an unknown one with it.
    pub fn add_record(
        &mut self,
        party: &PartyId,
        sk: &SecretKey,
        dob: &str,
        gender: &str,
        scan: &Scan,
        record: &VaccinationRecord,
    ) -> Result<AddOutcome> {
        record.validate()?;
        match self.authenticate(dob, gender, scan)? {
            None => self.enroll(party, sk, dob, gender, scan, record).map(AddOutcome::Enrolled),
            Some(id) => {
                self.publish_record(party, sk, id, record)?;
                Ok(AddOutcome::Appended(id))
            }
        }
    }

    pub fn fetch_records(&mut self, dob: &str, gender: &str, scan: &Scan) -> Result<Vec<VaccinationRecord>> {
        let Some(id) = self.authenticate(dob, gender, scan)? else {
            return Ok(Vec::new());
        };
        let mut out = self.state.records.get(&id).cloned().unwrap_or_default();
        out.extend(self.pending.records.iter().filter(|(p, _)| *p == id).map(|(_, r)| r.clone()));
        Ok(out)
    }
}

impl<B: Blockchain> fmt::Debug for PassportNode<B> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PassportNode")
            .field("num_blocks", &self.state.num_blocks)
            .field("ids", &self.state.ids.len())
            .field("hscans", &self.state.hscans.len())
            .finish()
    }
}

fn decode_rec(payload: &[u8]) -> std::result::Result<(UserId, VaccinationRecord), LedgerError> {
    let rec = RecPayload::decode(payload)?;
    Ok((UserId(rec.id), VaccinationRecord::decode(&rec.record)?))
}

/// True when both nodes hold the same `(ids, records, hscans)`.
pub fn states_agree(a: &PassportState, b: &PassportState) -> bool {
    a.same_content(b)
}
