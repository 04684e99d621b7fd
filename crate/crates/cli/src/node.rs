use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use irischain::biometric::{read_scan, Sample};
use irischain::ledger::{export_jsonl, keygen, load_chain, verify_blocks, BlockJson, Ledger, LedgerConfig, SharedLedger};
use irischain::passport::{AddOutcome, PassportNode, PassportParams, SetupConfig, VaccinationRecord};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::store::StateDir;
use crate::{check, Ctx, Failure};

#[derive(Subcommand, Debug)]
pub enum LedgerCommand {
    /// Create a chain whose genesis certifies `--parties` fresh key pairs
    Init {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 3)]
        parties: usize,
    },
    /// Advance the clock, producing one block per tick
    Tick {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        count: u64,
    },
    /// Check hashes, links, producers and signatures of the stored chain
    Verify {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Print one block as JSON
    Show {
        #[arg(long)]
        dir: PathBuf,
        height: u64,
    },
    /// Dump the chain
    Export {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value = "jsonl")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn ledger(ctx: &Ctx, cmd: LedgerCommand) -> Result<()> {
    match cmd {
        LedgerCommand::Init { dir, parties } => {
            let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed_or(0));
            let keys: Vec<_> = (0..parties)
                .map(|i| keygen(format!("party-{i}").as_str(), &mut rng))
                .collect();
            let ledger = Ledger::new(keys.iter().map(|(_, p)| p.clone()).collect(), LedgerConfig::default())
                .map_err(|e| Failure::Validation(e.to_string()))?;
            StateDir::new(&dir).init(&keys, &ledger)?;
            for (_, p) in &keys {
                println!("{} {}", p.id, hex::encode(p.public_key));
            }
        }
        LedgerCommand::Tick { dir, count } => {
            let store = StateDir::new(&dir);
            let mut l = store.load_ledger()?;
            let stored = l.blocks().len();
            for _ in 0..count {
                if let Some(b) = l.tick() {
                    println!("block {} by {} with {} transactions", b.height, b.producer, b.transactions.len());
                }
            }
            store.save(&l, stored)?;
        }
        LedgerCommand::Verify { dir } => {
            let blocks = load_chain(&StateDir::new(&dir).chain_path())?;
            match verify_blocks(&blocks) {
                Ok(()) => println!("ok: {} blocks", blocks.len()),
                Err(v) => check(false, || v.to_string())?,
            }
        }
        LedgerCommand::Show { dir, height } => {
            let l = StateDir::new(&dir).load_ledger()?;
            let b = l.retrieve_block(height).map_err(|e| Failure::Validation(e.to_string()))?;
            println!("{}", serde_json::to_string_pretty(&BlockJson::from(b))?);
        }
        LedgerCommand::Export { dir, format, out } => {
            if format != "jsonl" {
                return Err(Failure::Validation(format!("unsupported export format {format:?}")).into());
            }
            let l = StateDir::new(&dir).load_ledger()?;
            match out {
                Some(p) => {
                    let mut w = std::io::BufWriter::new(std::fs::File::create(&p)?);
                    export_jsonl(l.blocks(), &mut w)?;
                    w.flush()?;
                }
                None => export_jsonl(l.blocks(), std::io::stdout().lock())?,
            }
        }
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct UserArgs {
    #[arg(long)]
    dir: PathBuf,
    /// dd/mm/yyyy
    #[arg(long)]
    dob: String,
    /// male, female or other
    #[arg(long)]
    gender: String,
    /// Scan file: template record followed by mask record
    #[arg(long)]
    scan: PathBuf,
}

#[derive(Args, Debug)]
pub struct WriteArgs {
    #[command(flatten)]
    user: UserArgs,
    /// Party whose key signs the transactions
    #[arg(long)]
    party: String,
    /// Vaccination record as a JSON object
    #[arg(long)]
    record: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum PassportCommand {
    /// Derive system parameters from --seed and store them with the chain
    Setup {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        hash_bits: Option<usize>,
        /// Also compare rotated probes during authentication
        #[arg(long)]
        shift_search: bool,
    },
    /// Register a new user with an initial record
    Enroll(WriteArgs),
    /// Print the user's ID, or `none`
    Auth(UserArgs),
    /// Print the user's records, one JSON object per line
    Fetch(UserArgs),
    /// Append a record, enrolling the user first if unknown
    AddRecord(WriteArgs),
    /// Print a summary of the chain-derived state
    Sync {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn read_scan_file(path: &Path) -> Result<Sample> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let (template, mask) = read_scan(&text).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    Ok(Sample { template, mask })
}

fn read_record(path: &Path) -> Result<VaccinationRecord> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())).into())
}

/// A node over the stored chain. Enrolment delays are drawn from a stream
/// keyed by the seed and the current clock, so repeated runs differ per tick.
fn open(ctx: &Ctx, dir: &Path) -> Result<(StateDir, SharedLedger, usize, PassportNode<SharedLedger>)> {
    let store = StateDir::new(dir);
    let params: PassportParams = store.params()?;
    let ledger = store.load_ledger()?;
    let stored = ledger.blocks().len();
    let delay_seed = ctx.seed_or(params.system_seed) ^ ledger.now().rotate_left(32) ^ ledger.mempool().count() as u64;
    let chain = SharedLedger::new(ledger);
    let node = PassportNode::new(params, chain.clone(), delay_seed)?;
    Ok((store, chain, stored, node))
}

pub fn passport(ctx: &Ctx, cmd: PassportCommand) -> Result<()> {
    match cmd {
        PassportCommand::Setup {
            dir,
            threshold,
            hash_bits,
            shift_search,
        } => {
            let store = StateDir::new(&dir);
            store.load_ledger()?;
            let mut cfg = SetupConfig::default();
            if let Some(t) = threshold {
                cfg.threshold = t;
            }
            if let Some(m) = hash_bits {
                cfg.hash_bits = m;
            }
            cfg.biometric.shift_search = shift_search;
            let params = PassportParams::setup(ctx.seed_or(0), cfg)?;
            store.write_params(&params)?;
            println!("threshold {} hash bits {}", params.threshold, params.hash_bits());
        }
        PassportCommand::Enroll(a) => {
            let (store, chain, stored, mut node) = open(ctx, &a.user.dir)?;
            let (party, sk) = store.key(&a.party)?;
            let scan = read_scan_file(&a.user.scan)?;
            let record = read_record(&a.record)?;
            let id = node.enroll(&party, &sk, &a.user.dob, &a.user.gender, &scan, &record)?;
            store.save(&chain.read(), stored)?;
            println!("{id}");
        }
        PassportCommand::AddRecord(a) => {
            let (store, chain, stored, mut node) = open(ctx, &a.user.dir)?;
            let (party, sk) = store.key(&a.party)?;
            let scan = read_scan_file(&a.user.scan)?;
            let record = read_record(&a.record)?;
            let outcome = node.add_record(&party, &sk, &a.user.dob, &a.user.gender, &scan, &record)?;
            store.save(&chain.read(), stored)?;
            match outcome {
                AddOutcome::Enrolled(id) => println!("enrolled {id}"),
                AddOutcome::Appended(id) => println!("appended {id}"),
            }
        }
        PassportCommand::Auth(a) => {
            let (_, _, _, mut node) = open(ctx, &a.dir)?;
            let scan = read_scan_file(&a.scan)?;
            match node.authenticate(&a.dob, &a.gender, &scan)? {
                Some(id) => println!("{id}"),
                None => println!("none"),
            }
        }
        PassportCommand::Fetch(a) => {
            let (_, _, _, mut node) = open(ctx, &a.dir)?;
            let scan = read_scan_file(&a.scan)?;
            for r in node.fetch_records(&a.dob, &a.gender, &scan)? {
                println!("{}", serde_json::to_string(&r)?);
            }
        }
        PassportCommand::Sync { dir } => {
            let (_, _, _, node) = open(ctx, &dir)?;
            let s = node.committed();
            let summary = serde_json::json!({
                "numBlocks": s.num_blocks,
                "ids": s.ids.len(),
                "records": s.record_multiset().len(),
                "hscans": s.hscans.len(),
                "digest": hex::encode(s.digest()),
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
    }
    Ok(())
}
