use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use irischain::biometric::{encode_dataset_jsonl, synth_generate, write_scan, MaskingMode, SynthParams};
use irischain::harness::{
    parse_script, run_far_frr, run_raw_baseline, run_round_trip, run_scenario, run_security_suite, write_report,
    Domain, EvalConfig, ReportFormat,
};
use irischain::lsh::sample_projections;

use crate::{check, Ctx, Failure};

#[derive(Args, Debug, Default)]
pub struct DatasetArgs {
    #[arg(long)]
    subjects: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    /// Per-bit flip probability between samples of one subject
    #[arg(long)]
    p_intra: Option<f64>,
    /// Fraction of bits covered by the noise mask
    #[arg(long)]
    mask_density: Option<f64>,
}

impl DatasetArgs {
    pub fn apply(&self, p: &mut SynthParams) {
        if let Some(v) = self.subjects {
            p.subjects = v;
        }
        if let Some(v) = self.samples {
            p.samples_per_subject = v;
        }
        if let Some(v) = self.p_intra {
            p.p_intra = v;
        }
        if let Some(v) = self.mask_density {
            p.mask_density = v;
        }
    }
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// JSON Lines output, one sample per line
    #[arg(long)]
    out: PathBuf,
    /// Also write one scan file per sample into this directory
    #[arg(long)]
    scan_dir: Option<PathBuf>,
}

pub fn synth(ctx: &Ctx, a: SynthArgs) -> Result<()> {
    let mut params = ctx.config.synth.clone();
    a.dataset.apply(&mut params);
    params.seed = ctx.seed_or(params.seed);
    let data = synth_generate(&params).map_err(|e| Failure::Validation(e.to_string()))?;
    let f = std::fs::File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut w = std::io::BufWriter::new(f);
    encode_dataset_jsonl(&data, &mut w)?;
    w.flush()?;
    if let Some(dir) = &a.scan_dir {
        std::fs::create_dir_all(dir)?;
        for (s, k, sample) in data.iter() {
            std::fs::write(dir.join(format!("s{s:03}_{k}.scan")), write_scan(&sample.template, &sample.mask))?;
        }
    }
    println!("wrote {} samples ({} subjects) to {}", data.len(), params.subjects, a.out.display());
    Ok(())
}

#[derive(Subcommand, Debug)]
pub enum EvalCommand {
    /// FAR/FRR sweep in one domain
    FarFrr(SweepArgs),
    /// Raw and hashed sweeps side by side, with FAR/FRR crossovers
    Baseline(SweepArgs),
    /// Bit-balance advantage, preimage census and entropy probes
    Security(SecurityArgs),
    /// Enrol, wait for the hashes to land, authenticate
    RoundTrip(RoundTripArgs),
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// raw or hashed
    #[arg(long)]
    domain: Option<Domain>,
    /// Comma-separated, strictly ascending, in [0, 1]
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    hash_bits: Option<usize>,
    /// type1 or type2
    #[arg(long)]
    masking: Option<MaskingMode>,
    #[arg(long)]
    max_shifts: Option<usize>,
    #[arg(long)]
    impostor_cap: Option<usize>,
    #[arg(long, default_value = "csv")]
    format: ReportFormat,
    /// Write the report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

impl SweepArgs {
    fn config(&self, ctx: &Ctx) -> EvalConfig {
        let mut cfg = ctx.config.eval.clone();
        self.dataset.apply(&mut cfg.dataset);
        if let Some(v) = self.domain {
            cfg.domain = v;
        }
        if let Some(v) = &self.thresholds {
            cfg.thresholds = v.clone();
        }
        if let Some(v) = self.trials {
            cfg.trials = v;
        }
        if let Some(v) = self.hash_bits {
            cfg.hash_bits = v;
        }
        if let Some(v) = self.masking {
            cfg.masking_mode = v;
        }
        if let Some(v) = self.max_shifts {
            cfg.max_shifts = v;
        }
        if let Some(v) = self.impostor_cap {
            cfg.impostor_cap = v;
        }
        if let Some(s) = ctx.seed {
            cfg.seed = s;
            cfg.dataset.seed = s;
        }
        cfg
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

#[derive(Args, Debug)]
pub struct SecurityArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    #[arg(long, default_value_t = irischain::lsh::DEFAULT_HASH_BITS)]
    hash_bits: usize,
    /// Random inputs for the bit-balance probe
    #[arg(long)]
    trials: Option<usize>,
    /// Seed of the projection set under test (defaults to --seed)
    #[arg(long)]
    projection_seed: Option<u64>,
    /// Full JSON report, including per-index advantages and census counts
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RoundTripArgs {
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    users: Option<usize>,
    /// Noise between enrolment scan and re-scan
    #[arg(long)]
    p_intra: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Required identical-scan success rate
    #[arg(long, default_value_t = 1.0)]
    min_exact: f64,
    /// Required noisy re-scan success rate
    #[arg(long, default_value_t = 0.9)]
    min_noisy: f64,
}

pub fn run(ctx: &Ctx, cmd: EvalCommand) -> Result<()> {
    match cmd {
        EvalCommand::FarFrr(a) => {
            let rows = run_far_frr(&a.config(ctx))?;
            let mut out = output(&a.out)?;
            write_report(&rows, &mut out, a.format)?;
            out.flush()?;
        }
        EvalCommand::Baseline(a) => {
            let cmp = run_raw_baseline(&a.config(ctx))?;
            let mut out = output(&a.out)?;
            for (name, rows, cross) in [
                ("raw", &cmp.raw, cmp.raw_crossover),
                ("hashed", &cmp.hashed, cmp.hashed_crossover),
            ] {
                let cross = cross.map_or("none in range".to_string(), |c| format!("{c:.4}"));
                writeln!(out, "# {name} domain, FAR=FRR crossover: {cross}")?;
                write_report(rows, &mut out, a.format)?;
            }
            out.flush()?;
        }
        EvalCommand::Security(a) => {
            let mut cfg = ctx.config.security.clone();
            a.dataset.apply(&mut cfg.dataset);
            if let Some(t) = a.trials {
                cfg.trials = t;
            }
            cfg.seed = ctx.seed_or(cfg.seed);
            let r = sample_projections(cfg.dataset.dims.len(), a.hash_bits, a.projection_seed.unwrap_or(cfg.seed))?;
            let report = run_security_suite(&r, &cfg)?;
            let bb = &report.bit_balance;
            println!("n = {}, m = {}, trials = {}", bb.n, bb.m, bb.trials);
            println!(
                "bit balance: pooled max {:.5}, mean {:.5}; snooped max {:.5} (noise floor {:.5})",
                bb.max_advantage, bb.mean_advantage, bb.selected_max, bb.selection_noise_floor
            );
            let c = &report.census;
            println!(
                "census n = {}, m = {}: median {} mean {:.1} expected {}",
                c.n, c.m, c.median, c.mean, c.expected
            );
            println!(
                "entropy upper bound {:.1} bits vs m + lambda = {}",
                report.entropy_upper_bound,
                report.security.m + report.security.lambda
            );
            for ch in &report.checks {
                let mark = if ch.passed { "PASS" } else { "FAIL" };
                println!("{mark} {}: {:.5} ({})", ch.name, ch.value, ch.bound);
            }
            if report.degenerate {
                println!("FAIL projection set is degenerate (all-zero vectors)");
            }
            if let Some(p) = &a.json {
                std::fs::write(p, serde_json::to_string_pretty(&report)?)?;
            }
            check(report.passed(), || "security bounds not met".into())?;
        }
        EvalCommand::RoundTrip(a) => {
            let mut cfg = ctx.config.round_trip.clone();
            if let Some(v) = a.runs {
                cfg.runs = v;
            }
            if let Some(v) = a.users {
                cfg.users_per_run = v;
            }
            if let Some(v) = a.p_intra {
                cfg.p_intra = v;
            }
            if let Some(v) = a.threshold {
                cfg.setup.threshold = v;
            }
            cfg.seed = ctx.seed_or(cfg.seed);
            let r = run_round_trip(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
            println!("exact rate {:.4}, noisy rate {:.4}", r.exact_rate(), r.noisy_rate());
            check(r.exact_rate() >= a.min_exact && r.noisy_rate() >= a.min_noisy, || {
                format!(
                    "rates {:.4}/{:.4} below {}/{}",
                    r.exact_rate(),
                    r.noisy_rate(),
                    a.min_exact,
                    a.min_noisy
                )
            })?;
        }
    }
    Ok(())
}

#[derive(Subcommand, Debug)]
pub enum ScenarioCommand {
    /// Run a JSON list of {op, args} steps and print the transcript
    Run {
        script: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn scenario(ctx: &Ctx, cmd: ScenarioCommand) -> Result<()> {
    let ScenarioCommand::Run { script, out } = cmd;
    let text = std::fs::read_to_string(&script).with_context(|| format!("reading {}", script.display()))?;
    let steps = parse_script(&text)?;
    let mut cfg = ctx.config.scenario.clone();
    if let Some(s) = ctx.seed {
        cfg.seed = s;
        cfg.dataset.seed = s;
    }
    let transcript = run_scenario(&cfg, &steps)?;
    let mut w = output(&out)?;
    w.write_all(transcript.to_jsonl().as_bytes())?;
    w.flush()?;
    Ok(())
}
