//! On-disk state for the `ledger` and `passport` commands.
//!
//! ```text
//! DIR/chain.bin     append-only length-prefixed blocks
//! DIR/keys.json     party ids and secret key seeds
//! DIR/mempool.json  clock and queued transactions
//! DIR/params.json   passport parameters
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use irischain::ledger::{
    append_block, load_chain, Ledger, LedgerConfig, MempoolEntry, Party, PartyId, Reader, SecretKey, Transaction,
};
use irischain::passport::{ParamsFile, PassportParams};
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Debug, Serialize, Deserialize)]
struct KeyEntry {
    id: String,
    secret: String,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct MempoolFile {
    now: u64,
    entries: Vec<MempoolJson>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MempoolJson {
    tx: String,
    not_before_tick: u64,
    submitted_tick: u64,
    seq: u64,
}

pub struct StateDir {
    root: PathBuf,
}

impl StateDir {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn chain_path(&self) -> PathBuf {
        self.path("chain.bin")
    }

    pub fn init(&self, keys: &[(SecretKey, Party)], ledger: &Ledger) -> Result<()> {
        if self.chain_path().exists() {
            bail!(Failure::Validation(format!("{} already holds a chain", self.root.display())));
        }
        std::fs::create_dir_all(&self.root).with_context(|| format!("creating {}", self.root.display()))?;
        let entries: Vec<KeyEntry> = keys
            .iter()
            .map(|(sk, p)| KeyEntry {
                id: p.id.0.clone(),
                secret: hex::encode(sk.to_seed()),
            })
            .collect();
        write_json(&self.path("keys.json"), &entries)?;
        self.save(ledger, 0)
    }

    pub fn load_ledger(&self) -> Result<Ledger> {
        let path = self.chain_path();
        if !path.exists() {
            bail!(Failure::Validation(format!(
                "no chain in {}; run `ledger init` first",
                self.root.display()
            )));
        }
        let blocks = load_chain(&path)?;
        let mut ledger = Ledger::from_blocks(blocks, LedgerConfig::default())
            .map_err(|v| Failure::Check(format!("stored chain is invalid: {v}")))?;
        let mempool: MempoolFile = read_json(&self.path("mempool.json")).unwrap_or_default();
        let entries = mempool
            .entries
            .into_iter()
            .map(|e| {
                let bytes = hex::decode(&e.tx).context("mempool entry is not hex")?;
                let mut r = Reader::new(&bytes);
                let tx = Transaction::decode_from(&mut r)?;
                r.finish()?;
                Ok(MempoolEntry {
                    tx,
                    not_before_tick: e.not_before_tick,
                    submitted_tick: e.submitted_tick,
                    seq: e.seq,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        ledger.restore_mempool(entries, mempool.now);
        Ok(ledger)
    }

    /// Appends blocks past `stored` and rewrites the mempool file.
    pub fn save(&self, ledger: &Ledger, stored: usize) -> Result<()> {
        for b in &ledger.blocks()[stored..] {
            append_block(&self.chain_path(), b)?;
        }
        let mempool = MempoolFile {
            now: ledger.now(),
            entries: ledger
                .mempool()
                .map(|e| MempoolJson {
                    tx: hex::encode(e.tx.encode()),
                    not_before_tick: e.not_before_tick,
                    submitted_tick: e.submitted_tick,
                    seq: e.seq,
                })
                .collect(),
        };
        write_json(&self.path("mempool.json"), &mempool)
    }

    pub fn key(&self, party: &str) -> Result<(PartyId, SecretKey)> {
        let entries: Vec<KeyEntry> = read_json(&self.path("keys.json"))?;
        let e = entries
            .into_iter()
            .find(|e| e.id == party)
            .ok_or_else(|| Failure::Validation(format!("no key for party {party:?}")))?;
        let seed: [u8; 32] = hex::decode(&e.secret)
            .ok()
            .and_then(|b| b.try_into().ok())
            .context("malformed secret key")?;
        Ok((PartyId(e.id), SecretKey::from_seed(seed)))
    }

    pub fn write_params(&self, params: &PassportParams) -> Result<()> {
        write_json(&self.path("params.json"), &params.to_file())
    }

    pub fn params(&self) -> Result<PassportParams> {
        let path = self.path("params.json");
        if !path.exists() {
            bail!(Failure::Validation(format!(
                "no params in {}; run `passport setup` first",
                self.root.display()
            )));
        }
        let f: ParamsFile = read_json(&path)?;
        Ok(PassportParams::from_file(&f)?)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
