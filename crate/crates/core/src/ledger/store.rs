//! Chain persistence: an append-only file of `u32` length-prefixed canonical
//! block encodings, plus a JSON Lines export for inspection.

use std::fs::OpenOptions;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Block, LedgerError, Reader, Result, Transaction, Writer};

/// Canonical block bytes: content followed by the 32-byte block hash.
pub fn encode_block(block: &Block) -> Vec<u8> {
    let mut w = Writer::new();
    block.write_content(&mut w);
    w.fixed(&block.hash);
    w.finish()
}

pub fn decode_block(bytes: &[u8]) -> Result<Block> {
    let mut r = Reader::new(bytes);
    let height = r.u64()?;
    let prev_hash = r.fixed::<32>()?;
    let producer = super::PartyId(r.str()?.to_string());
    let count = r.u32()? as usize;
    let mut transactions = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        transactions.push(Transaction::decode_from(&mut r)?);
    }
    let hash = r.fixed::<32>()?;
    r.finish()?;
    Ok(Block {
        height,
        prev_hash,
        producer,
        transactions,
        hash,
    })
}

pub fn append_block(path: &Path, block: &Block) -> Result<()> {
    let bytes = encode_block(block);
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| LedgerError::Storage(e.to_string()))?;
    f.write_all(&(bytes.len() as u32).to_be_bytes())
        .and_then(|_| f.write_all(&bytes))
        .map_err(|e| LedgerError::Storage(e.to_string()))
}

/// Decodes every stored block. Integrity is left to `verify_blocks`.
pub fn load_chain(path: &Path) -> Result<Vec<Block>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| LedgerError::Storage(e.to_string()))?;
    let mut blocks = Vec::new();
    let mut pos = 0;
    while pos < buf.len() {
        let len_bytes = buf
            .get(pos..pos + 4)
            .ok_or_else(|| LedgerError::Storage("truncated length prefix".into()))?;
        let len = u32::from_be_bytes(len_bytes.try_into().unwrap()) as usize;
        pos += 4;
        let body = buf
            .get(pos..pos + len)
            .ok_or_else(|| LedgerError::Storage("truncated block".into()))?;
        blocks.push(decode_block(body)?);
        pos += len;
    }
    Ok(blocks)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxJson {
    #[serde(rename = "type")]
    pub tx_type: String,
    pub payload: String,
    pub party: Option<String>,
    pub signature: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockJson {
    pub height: u64,
    pub hash: String,
    pub prev_hash: String,
    pub producer: String,
    pub transactions: Vec<TxJson>,
}

impl From<&Block> for BlockJson {
    fn from(b: &Block) -> Self {
        Self {
            height: b.height,
            hash: hex::encode(b.hash),
            prev_hash: hex::encode(b.prev_hash),
            producer: b.producer.0.clone(),
            transactions: b
                .transactions
                .iter()
                .map(|tx| TxJson {
                    tx_type: tx.tx_type.tag().to_string(),
                    payload: hex::encode(&tx.payload),
                    party: tx.party.as_ref().map(|p| p.0.clone()),
                    signature: tx.signature.map(hex::encode),
                })
                .collect(),
        }
    }
}

pub fn export_jsonl<W: Write>(blocks: &[Block], mut w: W) -> std::io::Result<()> {
    for b in blocks {
        serde_json::to_writer(&mut w, &BlockJson::from(b))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
