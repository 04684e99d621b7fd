use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::protocol::SetupConfigFile;
use super::{HarnessError, Result};
use crate::biometric::{synth_generate, SynthParams};
use crate::ledger::{keygen, Blockchain, Ledger, LedgerConfig, Party, SecretKey, SharedLedger};
use crate::passport::{AddOutcome, PassportNode, PassportParams, UserId, VaccinationRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// One passport node per authorized party.
    pub parties: usize,
    pub dataset: SynthParams,
    pub setup: SetupConfigFile,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            parties: 2,
            dataset: SynthParams {
                subjects: 8,
                samples_per_subject: 3,
                p_intra: 0.05,
                ..SynthParams::default()
            },
            setup: SetupConfigFile::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserArgs {
    pub node: usize,
    pub subject: usize,
    #[serde(default)]
    pub sample: usize,
    pub dob: String,
    pub gender: String,
    #[serde(default)]
    pub record: Option<VaccinationRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TickArgs {
    #[serde(default = "one")]
    pub count: u64,
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeArgs {
    pub node: usize,
}

/// One scripted operation, written as `{"op": ..., "args": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", content = "args", rename_all = "kebab-case")]
pub enum Step {
    Enroll(UserArgs),
    Auth(UserArgs),
    AddRecord(UserArgs),
    Fetch(UserArgs),
    Tick(TickArgs),
    Sync(NodeArgs),
}

impl Step {
    fn op(&self) -> &'static str {
        match self {
            Self::Enroll(_) => "enroll",
            Self::Auth(_) => "auth",
            Self::AddRecord(_) => "add-record",
            Self::Fetch(_) => "fetch",
            Self::Tick(_) => "tick",
            Self::Sync(_) => "sync",
        }
    }
}

pub fn parse_script(text: &str) -> Result<Vec<Step>> {
    Ok(serde_json::from_str(text)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub step: usize,
    pub op: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node: Option<usize>,
    /// Chain length after the step.
    pub height: u64,
    pub result: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub records: Option<Vec<VaccinationRecord>>,
    /// Digest of the node's chain-derived state after the step.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
    pub final_height: u64,
    /// Per node, after a closing sync.
    pub final_digests: Vec<String>,
}

impl Transcript {
    /// JSON Lines: one entry per line, then a closing summary line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("entries serialize"));
            out.push('\n');
        }
        let summary = serde_json::json!({
            "finalHeight": self.final_height,
            "finalDigests": self.final_digests,
        });
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }
}

/// Replaces user IDs with `U1`, `U2`, ... in order of first appearance.
#[derive(Default)]
struct Aliases(BTreeMap<UserId, String>);

impl Aliases {
    fn get(&mut self, id: UserId) -> String {
        let next = format!("U{}", self.0.len() + 1);
        self.0.entry(id).or_insert(next).clone()
    }
}

/// Runs `steps` against one fresh ledger with one node per party. Protocol
/// errors are recorded in the transcript; malformed steps abort the run.
pub fn run_scenario(cfg: &ScenarioConfig, steps: &[Step]) -> Result<Transcript> {
    if cfg.parties == 0 {
        return Err(HarnessError::Validation("scenario needs at least one party".into()));
    }
    let params = PassportParams::setup(cfg.seed, cfg.setup.to_setup())?;
    let data = synth_generate(&SynthParams {
        dims: params.biometric.dims,
        ..cfg.dataset.clone()
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2);
    let keys: Vec<(SecretKey, Party)> = (0..cfg.parties)
        .map(|i| keygen(format!("party-{i}").as_str(), &mut rng))
        .collect();
    let chain = SharedLedger::new(Ledger::new(
        keys.iter().map(|(_, p)| p.clone()).collect(),
        LedgerConfig::default(),
    )?);
    let mut nodes = (0..cfg.parties)
        .map(|i| PassportNode::new(params.clone(), chain.clone(), cfg.seed.wrapping_add(1 + i as u64)))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut aliases = Aliases::default();
    let mut entries = Vec::with_capacity(steps.len());

    for (i, step) in steps.iter().enumerate() {
        let mut entry = TranscriptEntry {
            step: i,
            op: step.op().to_string(),
            node: None,
            height: 0,
            result: String::new(),
            records: None,
            digest: None,
        };
        match step {
            Step::Tick(t) => {
                chain.ticks(t.count);
                entry.result = format!("ticked {}", t.count);
            }
            Step::Sync(a) => {
                let node = nodes
                    .get_mut(a.node)
                    .ok_or_else(|| HarnessError::Validation(format!("step {i}: no node {}", a.node)))?;
                entry.result = match node.sync() {
                    Ok(s) => format!("synced to {}", s.num_blocks),
                    Err(e) => format!("error: {e}"),
                };
                entry.node = Some(a.node);
            }
            Step::Enroll(a) | Step::Auth(a) | Step::AddRecord(a) | Step::Fetch(a) => {
                let scan = data.sample(a.subject, a.sample).ok_or_else(|| {
                    HarnessError::Validation(format!("step {i}: no sample {}/{}", a.subject, a.sample))
                })?;
                let node = nodes
                    .get_mut(a.node)
                    .ok_or_else(|| HarnessError::Validation(format!("step {i}: no node {}", a.node)))?;
                let (sk, party) = &keys[a.node];
                let record = || {
                    a.record
                        .clone()
                        .ok_or_else(|| HarnessError::Validation(format!("step {i}: {} needs a record", step.op())))
                };
                entry.node = Some(a.node);
                entry.result = match step {
                    Step::Enroll(_) => match node.enroll(&party.id, sk, &a.dob, &a.gender, scan, &record()?) {
                        Ok(id) => format!("enrolled {}", aliases.get(id)),
                        Err(e) => format!("error: {e}"),
                    },
                    Step::Auth(_) => match node.authenticate(&a.dob, &a.gender, scan) {
                        Ok(Some(id)) => format!("authenticated {}", aliases.get(id)),
                        Ok(None) => "none".to_string(),
                        Err(e) => format!("error: {e}"),
                    },
                    Step::AddRecord(_) => match node.add_record(&party.id, sk, &a.dob, &a.gender, scan, &record()?) {
                        Ok(AddOutcome::Enrolled(id)) => format!("enrolled {}", aliases.get(id)),
                        Ok(AddOutcome::Appended(id)) => format!("appended {}", aliases.get(id)),
                        Err(e) => format!("error: {e}"),
                    },
                    Step::Fetch(_) => match node.fetch_records(&a.dob, &a.gender, scan) {
                        Ok(rs) => {
                            let r = format!("{} records", rs.len());
                            entry.records = Some(rs);
                            r
                        }
                        Err(e) => format!("error: {e}"),
                    },
                    Step::Tick(_) | Step::Sync(_) => unreachable!(),
                };
            }
        }
        if let Some(n) = entry.node {
            entry.digest = Some(hex::encode(nodes[n].committed().digest()));
        }
        entry.height = chain.get_num_blocks()?;
        entries.push(entry);
    }

    let mut final_digests = Vec::with_capacity(nodes.len());
    for node in &mut nodes {
        final_digests.push(hex::encode(node.sync()?.digest()));
    }
    Ok(Transcript {
        entries,
        final_height: chain.get_num_blocks()?,
        final_digests,
    })
}
