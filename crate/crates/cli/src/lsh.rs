use std::f64::consts::PI;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Subcommand;
use irischain::biometric::{
    decode_dataset_jsonl, extract_feature_vector, read_scan, synth_generate, MaskingMode,
};
use irischain::lsh::{
    bit_balance_advantage, entropy_estimate, eval_locality, preimage_census, sample_projections, SecurityParams,
    DEFAULT_HASH_BITS, DEFAULT_LAMBDA,
};

use crate::eval::DatasetArgs;
use crate::store::StateDir;
use crate::{check, Ctx};

const DEFAULT_N: usize = 9600;

#[derive(Subcommand, Debug)]
pub enum LshCommand {
    /// Hash one scan file
    Hash {
        #[arg(long)]
        scan: PathBuf,
        /// Take the projection set from a passport state directory
        #[arg(long)]
        dir: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_HASH_BITS)]
        hash_bits: usize,
    },
    /// Mean per-bit agreement against 1 - theta/pi at several angles
    EvalLocality {
        #[arg(long, default_value_t = DEFAULT_N)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_HASH_BITS)]
        m: usize,
        /// Pairs per angle
        #[arg(long, default_value_t = 10_000)]
        pairs: usize,
        /// Pairs hashed with one projection set before drawing a new one
        #[arg(long, default_value_t = 500)]
        per_projection: usize,
        /// Angles as fractions of pi
        #[arg(long, value_delimiter = ',', default_value = "0.125,0.25,0.375,0.5")]
        angles: Vec<f64>,
        #[arg(long, default_value_t = 0.03)]
        tolerance: f64,
    },
    /// Exhaustive preimage counts for random (R, x) at small n
    PreimageCensus {
        #[arg(long, default_value_t = 12)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        m: usize,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        /// Median must lie within this factor of 2^(n-m)
        #[arg(long, default_value_t = 4.0)]
        factor: f64,
    },
    /// Single-bit predictor advantage over uniform inputs
    BitBalance {
        #[arg(long, default_value_t = DEFAULT_N)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_HASH_BITS)]
        m: usize,
        #[arg(long, default_value_t = 5000)]
        trials: usize,
        #[arg(long, default_value_t = 0.05)]
        bound: f64,
        /// Seed of the projection set (defaults to --seed)
        #[arg(long)]
        projection_seed: Option<u64>,
    },
    /// Marginal entropy of feature vectors against m + lambda
    Entropy {
        /// Dataset in JSON Lines; a synthetic one is generated otherwise
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[command(flatten)]
        synth: DatasetArgs,
        #[arg(long, default_value = "type1")]
        masking: MaskingMode,
        #[arg(long, default_value_t = DEFAULT_HASH_BITS)]
        m: usize,
        #[arg(long, default_value_t = DEFAULT_LAMBDA)]
        lambda: usize,
    },
}

pub fn run(ctx: &Ctx, cmd: LshCommand) -> Result<()> {
    let seed = ctx.seed_or(0);
    match cmd {
        LshCommand::Hash { scan, dir, hash_bits } => {
            let text = std::fs::read_to_string(&scan).with_context(|| format!("reading {}", scan.display()))?;
            let (template, mask) = read_scan(&text)?;
            let (r, mode, global) = match dir {
                Some(d) => {
                    let p = StateDir::new(&d).params()?;
                    (p.projections.as_ref().clone(), p.biometric.masking_mode, p.global_mask.clone())
                }
                None => (sample_projections(template.dims().len(), hash_bits, seed)?, MaskingMode::Type1, None),
            };
            let fv = extract_feature_vector(&template, &mask, mode, global.as_ref())?;
            println!("{}", r.hash_bits(fv.bits())?);
        }
        LshCommand::EvalLocality {
            n,
            m,
            pairs,
            per_projection,
            angles,
            tolerance,
        } => {
            let thetas: Vec<f64> = angles.iter().map(|a| a * PI).collect();
            let rows = eval_locality(n, m, &thetas, pairs, per_projection, seed)?;
            println!("theta/pi,mean_theta/pi,expected,measured,deviation");
            for r in &rows {
                println!(
                    "{:.4},{:.4},{:.4},{:.4},{:.4}",
                    r.target_theta / PI,
                    r.mean_theta / PI,
                    r.expected_agreement,
                    r.mean_agreement,
                    r.deviation()
                );
            }
            let worst = rows.iter().map(|r| r.deviation()).fold(0.0, f64::max);
            check(worst <= tolerance, || format!("deviation {worst:.4} exceeds {tolerance}"))?;
        }
        LshCommand::PreimageCensus { n, m, trials, factor } => {
            let c = preimage_census(n, m, trials, seed)?;
            println!("expected 2^(n-m) = {}", c.expected);
            println!("median {} mean {:.1}", c.median, c.mean);
            println!(
                "counts {}",
                c.counts.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
            );
            check(c.median_within_factor(factor), || {
                format!("median {} not within x{factor} of {}", c.median, c.expected)
            })?;
        }
        LshCommand::BitBalance {
            n,
            m,
            trials,
            bound,
            projection_seed,
        } => {
            let r = sample_projections(n, m, projection_seed.unwrap_or(seed))?;
            let b = bit_balance_advantage(&r, trials, seed.wrapping_add(1))?;
            println!("pooled max advantage {:.5}", b.max_advantage);
            println!("pooled mean advantage {:.5}", b.mean_advantage);
            println!(
                "snooped max over all (i, j) {:.5}, selection noise floor {:.5}",
                b.selected_max, b.selection_noise_floor
            );
            println!("degenerate {}", b.degenerate);
            check(b.max_advantage < bound, || format!("advantage {:.5} >= {bound}", b.max_advantage))?;
        }
        LshCommand::Entropy {
            dataset,
            synth,
            masking,
            m,
            lambda,
        } => {
            let samples = match dataset {
                Some(p) => {
                    let f = std::fs::File::open(&p).with_context(|| format!("opening {}", p.display()))?;
                    decode_dataset_jsonl(std::io::BufReader::new(f))?
                }
                None => {
                    let mut params = ctx.config.synth.clone();
                    synth.apply(&mut params);
                    params.seed = ctx.seed_or(params.seed);
                    synth_generate(&params)?.subjects
                }
            };
            let global = match masking {
                MaskingMode::Type1 => None,
                MaskingMode::Type2 => Some(irischain::biometric::compute_global_mask(
                    samples.iter().flatten().map(|s| &s.mask),
                )?),
            };
            let fvs = samples
                .iter()
                .flatten()
                .map(|s| Ok(extract_feature_vector(&s.template, &s.mask, masking, global.as_ref())?.into_bits()))
                .collect::<Result<Vec<_>>>()?;
            let h = entropy_estimate(&fvs)?;
            let sp = SecurityParams::new(lambda, m, h);
            println!("samples {}", fvs.len());
            println!("entropy upper bound {h:.1} bits");
            println!("m + lambda = {}: {}", m + lambda, if sp.input_hiding { "met" } else { "not met" });
            check(sp.input_hiding, || format!("entropy {h:.1} below {}", m + lambda))?;
        }
    }
    Ok(())
}
