//! In-process simulation of a permissioned blockchain.
//!
//! Writers are the parties listed in the genesis block. Blocks are produced in
//! round-robin order over the membership sorted by party id, one per call to
//! [`Ledger::produce_block`]. Time is a discrete tick counter; a mempool entry
//! becomes eligible for inclusion once the producing tick reaches its
//! `not_before_tick`.
//!
//! Anonymous broadcast is modeled by a gateway: the submitter's key is checked
//! against the membership, then the transaction enters the mempool with no
//! party and no signature.

mod codec;
mod crypto;
mod store;

pub use codec::{Reader, Writer};
pub use crypto::{keygen, sign, verify, Party, PartyId, PublicKey, SecretKey, Signature};
pub use store::{append_block, decode_block, encode_block, export_jsonl, load_chain, BlockJson};

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::lsh::HashVector;

pub type Digest = [u8; 32];
pub const ZERO_DIGEST: Digest = [0; 32];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("party {0} is not an authorized writer")]
    Unauthorized(String),
    #[error("secret key does not match any authorized party")]
    UnknownKey,
    #[error("signature does not verify")]
    BadSignature,
    #[error("malformed transaction: {0}")]
    Malformed(String),
    #[error("block {index} out of range (chain has {len} blocks)")]
    OutOfRange { index: u64, len: u64 },
    #[error("membership must not be empty")]
    EmptyMembership,
    #[error("duplicate party id {0}")]
    DuplicateParty(String),
    #[error("ledger unavailable: {0}")]
    Unavailable(String),
    #[error("storage error: {0}")]
    Storage(String),
}

pub type Result<T> = std::result::Result<T, LedgerError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TxType {
    /// `(ID, record)` pair, always signed.
    Rec,
    /// Anonymous biometric hash.
    Hscan,
    /// Authority certificate; only valid in the genesis block.
    Cert,
}

impl TxType {
    pub fn tag(self) -> &'static str {
        match self {
            Self::Rec => "rec",
            Self::Hscan => "hscan",
            Self::Cert => "cert",
        }
    }

    fn code(self) -> u8 {
        match self {
            Self::Rec => 1,
            Self::Hscan => 2,
            Self::Cert => 3,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            1 => Ok(Self::Rec),
            2 => Ok(Self::Hscan),
            3 => Ok(Self::Cert),
            _ => Err(LedgerError::Malformed(format!("unknown transaction type {c}"))),
        }
    }
}

impl fmt::Display for TxType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// `(type, payload, party, signature)`; anonymous transactions carry neither
/// party nor signature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub tx_type: TxType,
    pub payload: Vec<u8>,
    pub party: Option<PartyId>,
    pub signature: Option<Signature>,
}

impl Transaction {
    /// A signed transaction from `party`.
    pub fn signed(tx_type: TxType, payload: Vec<u8>, party: &PartyId, sk: &SecretKey) -> Self {
        let signature = sign(sk, &signing_bytes(tx_type, &payload));
        Self {
            tx_type,
            payload,
            party: Some(party.clone()),
            signature: Some(signature),
        }
    }

    pub fn anonymous(tx_type: TxType, payload: Vec<u8>) -> Self {
        Self {
            tx_type,
            payload,
            party: None,
            signature: None,
        }
    }

    pub fn is_anonymous(&self) -> bool {
        self.party.is_none() && self.signature.is_none()
    }

    pub fn signing_bytes(&self) -> Vec<u8> {
        signing_bytes(self.tx_type, &self.payload)
    }

    pub fn encode_into(&self, w: &mut Writer) {
        w.u8(self.tx_type.code())
            .bytes(&self.payload)
            .opt_bytes(self.party.as_ref().map(|p| p.0.as_bytes()))
            .opt_fixed(self.signature.as_ref().map(|s| s.as_slice()));
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode_into(&mut w);
        w.finish()
    }

    pub fn decode_from(r: &mut Reader<'_>) -> Result<Self> {
        let tx_type = TxType::from_code(r.u8()?)?;
        let payload = r.bytes()?.to_vec();
        let party = r
            .opt_bytes()?
            .map(|b| {
                String::from_utf8(b.to_vec())
                    .map(PartyId)
                    .map_err(|_| LedgerError::Malformed("party id is not utf-8".into()))
            })
            .transpose()?;
        let signature = r.opt_fixed::<64>()?;
        Ok(Self {
            tx_type,
            payload,
            party,
            signature,
        })
    }
}

/// The bytes a signature covers: the type tag and the payload.
pub fn signing_bytes(tx_type: TxType, payload: &[u8]) -> Vec<u8> {
    let mut w = Writer::new();
    w.str(tx_type.tag()).bytes(payload);
    w.finish()
}

/// Payload of a `rec` transaction. The record body is opaque to the ledger.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecPayload {
    pub id: Digest,
    pub record: Vec<u8>,
}

impl RecPayload {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.fixed(&self.id).bytes(&self.record);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let id = r.fixed::<32>()?;
        let record = r.bytes()?.to_vec();
        r.finish()?;
        Ok(Self { id, record })
    }
}

/// `hscan` payload: `u32` bit length, then the MSB-first packed hash bits.
pub fn encode_hscan(h: &HashVector) -> Vec<u8> {
    let mut w = Writer::new();
    w.u32(h.len() as u32).fixed(&h.to_bytes());
    w.finish()
}

pub fn decode_hscan(bytes: &[u8]) -> Result<HashVector> {
    let mut r = Reader::new(bytes);
    let m = r.u32()? as usize;
    if m == 0 {
        return Err(LedgerError::Malformed("empty hash".into()));
    }
    let packed = bytes.get(4..).unwrap_or_default();
    HashVector::from_bytes(m, packed).ok_or_else(|| LedgerError::Malformed("hash bits do not match length".into()))
}

fn encode_cert(party: &Party) -> Vec<u8> {
    let mut w = Writer::new();
    w.str(party.id.as_str()).fixed(&party.public_key);
    w.finish()
}

fn decode_cert(bytes: &[u8]) -> Result<(PartyId, PublicKey)> {
    let mut r = Reader::new(bytes);
    let id = PartyId(r.str()?.to_string());
    let pk = r.fixed::<32>()?;
    r.finish()?;
    Ok((id, pk))
}

fn check_payload(tx: &Transaction) -> Result<()> {
    match tx.tx_type {
        TxType::Rec => RecPayload::decode(&tx.payload).map(drop),
        TxType::Hscan => decode_hscan(&tx.payload).map(drop),
        TxType::Cert => decode_cert(&tx.payload).map(drop),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub height: u64,
    pub prev_hash: Digest,
    pub producer: PartyId,
    pub transactions: Vec<Transaction>,
    pub hash: Digest,
}

impl Block {
    fn new(height: u64, prev_hash: Digest, producer: PartyId, transactions: Vec<Transaction>) -> Self {
        let mut b = Self {
            height,
            prev_hash,
            producer,
            transactions,
            hash: ZERO_DIGEST,
        };
        b.hash = b.compute_hash();
        b
    }

    /// Canonical encoding of everything except the hash itself.
    pub fn header_and_body(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.write_content(&mut w);
        w.finish()
    }

    fn write_content(&self, w: &mut Writer) {
        w.u64(self.height)
            .fixed(&self.prev_hash)
            .str(self.producer.as_str())
            .u32(self.transactions.len() as u32);
        for tx in &self.transactions {
            tx.encode_into(w);
        }
    }

    pub fn compute_hash(&self) -> Digest {
        Sha256::digest(self.header_and_body()).into()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MempoolEntry {
    pub tx: Transaction,
    pub not_before_tick: u64,
    pub submitted_tick: u64,
    pub seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub seq: u64,
    pub submitted_tick: u64,
    pub not_before_tick: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerConfig {
    /// Produce a block even when nothing is eligible.
    pub empty_blocks: bool,
}

impl Default for LedgerConfig {
    fn default() -> Self {
        Self { empty_blocks: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    Height { found: u64 },
    PrevHash,
    BlockHash,
    Producer { expected: PartyId, found: PartyId },
    Genesis(String),
    Transaction { index: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("chain violation at height {height}: {kind:?}")]
pub struct Violation {
    pub height: u64,
    pub kind: ViolationKind,
}

/// Membership as recorded in a genesis block, in round-robin order.
pub fn membership_from_genesis(genesis: &Block) -> std::result::Result<Vec<(PartyId, PublicKey)>, Violation> {
    let fail = |reason: String| Violation {
        height: 0,
        kind: ViolationKind::Genesis(reason),
    };
    let mut members = BTreeMap::new();
    for tx in &genesis.transactions {
        if tx.tx_type != TxType::Cert {
            return Err(fail(format!("non-certificate {} transaction", tx.tx_type)));
        }
        let (id, pk) = decode_cert(&tx.payload).map_err(|e| fail(e.to_string()))?;
        if tx.party.as_ref() != Some(&id) || tx.signature.is_some() {
            return Err(fail("certificate party field mismatch".into()));
        }
        if members.insert(id.clone(), pk).is_some() {
            return Err(fail(format!("duplicate party {id}")));
        }
    }
    if members.is_empty() {
        return Err(fail("no members".into()));
    }
    Ok(members.into_iter().collect())
}

/// Checks hash linkage, hash recomputation, transaction signatures and
/// round-robin producer order, returning the first violation.
pub fn verify_blocks(blocks: &[Block]) -> std::result::Result<(), Violation> {
    let Some(genesis) = blocks.first() else {
        return Err(Violation {
            height: 0,
            kind: ViolationKind::Genesis("empty chain".into()),
        });
    };
    let members = membership_from_genesis(genesis)?;
    let keys: BTreeMap<&PartyId, &PublicKey> = members.iter().map(|(id, pk)| (id, pk)).collect();
    let mut prev = ZERO_DIGEST;
    for (i, block) in blocks.iter().enumerate() {
        let height = i as u64;
        let violation = |kind| Violation { height, kind };
        if block.height != height {
            return Err(violation(ViolationKind::Height { found: block.height }));
        }
        if block.prev_hash != prev {
            return Err(violation(ViolationKind::PrevHash));
        }
        if block.compute_hash() != block.hash {
            return Err(violation(ViolationKind::BlockHash));
        }
        let expected = &members[(height % members.len() as u64) as usize].0;
        if &block.producer != expected {
            return Err(violation(ViolationKind::Producer {
                expected: expected.clone(),
                found: block.producer.clone(),
            }));
        }
        if height > 0 {
            for (index, tx) in block.transactions.iter().enumerate() {
                check_committed_tx(tx, &keys)
                    .map_err(|reason| violation(ViolationKind::Transaction { index, reason }))?;
            }
        }
        prev = block.hash;
    }
    Ok(())
}

fn check_committed_tx(tx: &Transaction, keys: &BTreeMap<&PartyId, &PublicKey>) -> std::result::Result<(), String> {
    if tx.tx_type == TxType::Cert {
        return Err("certificate outside genesis".into());
    }
    check_payload(tx).map_err(|e| e.to_string())?;
    match (&tx.party, &tx.signature) {
        (None, None) if tx.tx_type == TxType::Hscan => Ok(()),
        (None, None) => Err("anonymous record transaction".into()),
        (Some(p), Some(sig)) => {
            let pk = keys.get(p).ok_or_else(|| format!("party {p} is not a member"))?;
            if verify(pk, &tx.signing_bytes(), sig) {
                Ok(())
            } else {
                Err("bad signature".into())
            }
        }
        _ => Err("party and signature must be both present or both absent".into()),
    }
}

#[derive(Debug, Clone)]
pub struct Ledger {
    config: LedgerConfig,
    members: Vec<Party>,
    blocks: Vec<Block>,
    mempool: VecDeque<MempoolEntry>,
    now: u64,
    next_seq: u64,
}

impl Ledger {
    /// Creates a chain whose genesis block certifies `parties`. The clock
    /// starts at tick 1; genesis is tick 0.
    pub fn new(parties: Vec<Party>, config: LedgerConfig) -> Result<Self> {
        if parties.is_empty() {
            return Err(LedgerError::EmptyMembership);
        }
        let mut members = parties;
        members.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = members.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(LedgerError::DuplicateParty(w[0].id.0.clone()));
        }
        let certs = members
            .iter()
            .filter(|p| p.authorized)
            .map(|p| Transaction {
                tx_type: TxType::Cert,
                payload: encode_cert(p),
                party: Some(p.id.clone()),
                signature: None,
            })
            .collect::<Vec<_>>();
        members.retain(|p| p.authorized);
        if members.is_empty() {
            return Err(LedgerError::EmptyMembership);
        }
        let genesis = Block::new(0, ZERO_DIGEST, members[0].id.clone(), certs);
        Ok(Self {
            config,
            members,
            blocks: vec![genesis],
            mempool: VecDeque::new(),
            now: 1,
            next_seq: 0,
        })
    }

    /// Rebuilds a ledger from stored blocks after verifying them.
    pub fn from_blocks(blocks: Vec<Block>, config: LedgerConfig) -> std::result::Result<Self, Violation> {
        verify_blocks(&blocks)?;
        let members = membership_from_genesis(&blocks[0])?
            .into_iter()
            .map(|(id, public_key)| Party {
                id,
                public_key,
                authorized: true,
            })
            .collect();
        let now = blocks.len() as u64;
        Ok(Self {
            config,
            members,
            blocks,
            mempool: VecDeque::new(),
            now,
            next_seq: 0,
        })
    }

    pub fn config(&self) -> LedgerConfig {
        self.config
    }

    /// Authorized parties in round-robin order.
    pub fn members(&self) -> &[Party] {
        &self.members
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn mempool(&self) -> impl Iterator<Item = &MempoolEntry> {
        self.mempool.iter()
    }

    pub fn restore_mempool(&mut self, entries: Vec<MempoolEntry>, now: u64) {
        self.next_seq = entries.iter().map(|e| e.seq + 1).max().unwrap_or(0);
        self.mempool = entries.into();
        self.now = now.max(self.now);
    }

    fn member(&self, id: &PartyId) -> Option<&Party> {
        self.members.iter().find(|p| &p.id == id)
    }

    fn enqueue(&mut self, tx: Transaction, delay: u64) -> Receipt {
        let receipt = Receipt {
            seq: self.next_seq,
            submitted_tick: self.now,
            not_before_tick: self.now + delay,
        };
        self.next_seq += 1;
        self.mempool.push_back(MempoolEntry {
            tx,
            not_before_tick: receipt.not_before_tick,
            submitted_tick: receipt.submitted_tick,
            seq: receipt.seq,
        });
        receipt
    }

    /// Accepts `tx` into the mempool iff `party` is a member, `sk` is its key,
    /// and the transaction is signed by it.
    pub fn broadcast(&mut self, party: &PartyId, sk: &SecretKey, tx: Transaction) -> Result<Receipt> {
        let member = self
            .member(party)
            .ok_or_else(|| LedgerError::Unauthorized(party.0.clone()))?;
        if member.public_key != sk.public_key() {
            return Err(LedgerError::UnknownKey);
        }
        if tx.party.as_ref() != Some(party) {
            return Err(LedgerError::Malformed("transaction party does not match sender".into()));
        }
        let sig = tx.signature.ok_or(LedgerError::BadSignature)?;
        if tx.tx_type == TxType::Cert {
            return Err(LedgerError::Malformed("certificates are only accepted at genesis".into()));
        }
        check_payload(&tx)?;
        if !verify(&member.public_key, &tx.signing_bytes(), &sig) {
            return Err(LedgerError::BadSignature);
        }
        Ok(self.enqueue(tx, 0))
    }

    /// Gateway for identity-free submissions: `sk` must belong to a member;
    /// the transaction itself must carry no identity.
    pub fn anon_broadcast(&mut self, sk: &SecretKey, tx: Transaction, delay_ticks: u64) -> Result<Receipt> {
        let pk = sk.public_key();
        if !self.members.iter().any(|p| p.public_key == pk) {
            return Err(LedgerError::UnknownKey);
        }
        if !tx.is_anonymous() {
            return Err(LedgerError::Malformed("anonymous transactions carry no party or signature".into()));
        }
        if tx.tx_type != TxType::Hscan {
            return Err(LedgerError::Malformed(format!("{} transactions cannot be anonymous", tx.tx_type)));
        }
        check_payload(&tx)?;
        Ok(self.enqueue(tx, delay_ticks))
    }

    pub fn get_num_blocks(&self) -> u64 {
        self.blocks.len() as u64
    }

    pub fn retrieve_block(&self, block_no: u64) -> Result<&Block> {
        self.blocks.get(block_no as usize).ok_or(LedgerError::OutOfRange {
            index: block_no,
            len: self.get_num_blocks(),
        })
    }

    /// Producer of the next block.
    pub fn next_producer(&self) -> &PartyId {
        let h = self.get_num_blocks();
        &self.members[(h % self.members.len() as u64) as usize].id
    }

    /// Produces a block at `tick` holding every eligible mempool entry in
    /// submission order. Returns `None` when nothing is eligible and empty
    /// blocks are disabled.
    pub fn produce_block(&mut self, tick: u64) -> Option<&Block> {
        let (eligible, waiting): (Vec<_>, Vec<_>) = self
            .mempool
            .drain(..)
            .partition(|e| e.not_before_tick <= tick);
        self.mempool = waiting.into();
        self.now = self.now.max(tick + 1);
        if eligible.is_empty() && !self.config.empty_blocks {
            return None;
        }
        let prev = self.blocks.last().expect("genesis always present").hash;
        let producer = self.next_producer().clone();
        let block = Block::new(
            self.get_num_blocks(),
            prev,
            producer,
            eligible.into_iter().map(|e| e.tx).collect(),
        );
        self.blocks.push(block);
        self.blocks.last()
    }

    /// Produces a block at the current tick and advances the clock.
    pub fn tick(&mut self) -> Option<&Block> {
        let t = self.now;
        self.produce_block(t)
    }

    pub fn verify_chain(&self) -> std::result::Result<(), Violation> {
        verify_blocks(&self.blocks)
    }
}

/// Read and write access to a chain, as seen by a protocol node.
pub trait Blockchain {
    fn broadcast(&self, party: &PartyId, sk: &SecretKey, tx: Transaction) -> Result<Receipt>;
    fn anon_broadcast(&self, sk: &SecretKey, tx: Transaction, delay_ticks: u64) -> Result<Receipt>;
    fn get_num_blocks(&self) -> Result<u64>;
    fn retrieve_block(&self, block_no: u64) -> Result<Block>;
}

/// A ledger shared by several nodes. Writes are serialized by the lock;
/// reads run concurrently against committed blocks.
#[derive(Debug, Clone)]
pub struct SharedLedger(Arc<RwLock<Ledger>>);

impl SharedLedger {
    pub fn new(ledger: Ledger) -> Self {
        Self(Arc::new(RwLock::new(ledger)))
    }

    pub fn read(&self) -> parking_lot::RwLockReadGuard<'_, Ledger> {
        self.0.read()
    }

    pub fn write(&self) -> parking_lot::RwLockWriteGuard<'_, Ledger> {
        self.0.write()
    }

    pub fn tick(&self) -> Option<Block> {
        self.0.write().tick().cloned()
    }

    pub fn ticks(&self, n: u64) {
        let mut l = self.0.write();
        for _ in 0..n {
            l.tick();
        }
    }
}

impl Blockchain for SharedLedger {
    fn broadcast(&self, party: &PartyId, sk: &SecretKey, tx: Transaction) -> Result<Receipt> {
        self.0.write().broadcast(party, sk, tx)
    }

    fn anon_broadcast(&self, sk: &SecretKey, tx: Transaction, delay_ticks: u64) -> Result<Receipt> {
        self.0.write().anon_broadcast(sk, tx, delay_ticks)
    }

    fn get_num_blocks(&self) -> Result<u64> {
        Ok(self.0.read().get_num_blocks())
    }

    fn retrieve_block(&self, block_no: u64) -> Result<Block> {
        self.0.read().retrieve_block(block_no).cloned()
    }
}

#[cfg(test)]
mod tests;
