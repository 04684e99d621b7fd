//! Empirical probes of how much a hash reveals about its input: exhaustive
//! preimage enumeration, per-bit predictor advantage, entropy of the input
//! distribution, and the angle/agreement law.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{angle, hash_hamming, sample_projections, HashVector, LshError, ProjectionSet, Result};
use crate::bits::BitVector;

/// Largest input length the exhaustive oracle will enumerate.
pub const MAX_ORACLE_BITS: usize = 20;

/// Every `x` in {0,1}^n with `hash(x) = h`, in lexicographic order
/// (`x[0]` most significant).
pub fn preimage_oracle(r: &ProjectionSet, h: &HashVector) -> Result<Vec<BitVector>> {
    let n = r.n();
    if n > MAX_ORACLE_BITS {
        return Err(LshError::TooLarge(n));
    }
    if h.len() != r.m() {
        return Err(LshError::LengthMismatch { expected: r.m(), got: h.len() });
    }
    let to_vec = |v: u64| BitVector::from_bools((0..n).map(|i| (v >> (n - 1 - i)) & 1 == 1));
    Ok((0..1u64 << n)
        .into_par_iter()
        .map(to_vec)
        .filter(|x| r.hash_bits(x).as_ref() == Ok(h))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusReport {
    pub n: usize,
    pub m: usize,
    pub trials: usize,
    pub seed: u64,
    /// Preimage-set size of `hash(x)` for each trial's random `(R, x)`.
    pub counts: Vec<usize>,
    pub expected: f64,
    pub median: f64,
    pub mean: f64,
}

impl CensusReport {
    pub fn median_within_factor(&self, factor: f64) -> bool {
        self.median >= self.expected / factor && self.median <= self.expected * factor
    }

    pub fn mean_within_factor(&self, factor: f64) -> bool {
        self.mean >= self.expected / factor && self.mean <= self.expected * factor
    }
}

/// Samples `trials` random `(R, x)` pairs and counts the preimages of
/// `hash_R(x)` by exhaustive enumeration.
pub fn preimage_census(n: usize, m: usize, trials: usize, seed: u64) -> Result<CensusReport> {
    if n > MAX_ORACLE_BITS {
        return Err(LshError::TooLarge(n));
    }
    if trials == 0 {
        return Err(LshError::InvalidParameter("census needs at least one trial".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = Vec::with_capacity(trials);
    for _ in 0..trials {
        let r = sample_projections(n, m, rng.gen())?;
        let x = BitVector::from_bools((0..n).map(|_| rng.gen::<bool>()));
        let h = r.hash_bits(&x)?;
        let pre = preimage_oracle(&r, &h)?;
        debug_assert!(pre.contains(&x));
        counts.push(pre.len());
    }
    let mut sorted = counts.clone();
    sorted.sort_unstable();
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 0 {
        (sorted[mid - 1] + sorted[mid]) as f64 / 2.0
    } else {
        sorted[mid] as f64
    };
    let mean = counts.iter().sum::<usize>() as f64 / trials as f64;
    Ok(CensusReport {
        n,
        m,
        trials,
        seed,
        counts,
        expected: 2f64.powi(n as i32 - m as i32),
        median,
        mean,
    })
}

/// Advantage of single-hash-bit predictors of individual input bits over
/// uniform inputs.
///
/// For input index `i` and hash bit `j` the signed statistic is
/// `Pr[x_i = 0, h_j = 1] - Pr[x_i = 1, h_j = 1]`, the advantage of the
/// adversary that outputs `h_j`. The adversary outputting `!h_j` has the
/// negated advantage, so the pair is covered by the absolute value.
///
/// Two estimates are reported:
/// - `per_index`: the predictor is fixed in advance from the public
///   projections. Every hash bit whose vector has a nonzero entry at `i` is an
///   equally good predictor, oriented by the sign of that entry; their
///   oriented statistics are pooled. This is an unbiased estimate of that
///   predictor's advantage.
/// - `selected_max`: the largest `|statistic|` over all `(i, j)`, i.e. the
///   predictor picked after looking at the same samples. It is biased upward
///   by selection over `n * m` candidates; `selection_noise_floor` is the
///   value it would take on for a hash that is independent of its input.
///
/// This only covers single-output-bit adversaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitBalanceReport {
    pub n: usize,
    pub m: usize,
    pub trials: usize,
    pub seed: u64,
    pub degenerate: bool,
    pub per_index: Vec<f64>,
    pub max_advantage: f64,
    pub mean_advantage: f64,
    pub selected_max: f64,
    pub selection_noise_floor: f64,
}

pub fn bit_balance_advantage(r: &ProjectionSet, trials: usize, seed: u64) -> Result<BitBalanceReport> {
    if trials < 1000 {
        return Err(LshError::InvalidParameter(format!(
            "bit balance needs at least 1000 trials, got {trials}"
        )));
    }
    let (n, m) = (r.n(), r.m());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<BitVector> = (0..trials)
        .map(|_| BitVector::from_bools((0..n).map(|_| rng.gen::<bool>())))
        .collect();
    let hashes = inputs
        .par_iter()
        .map(|x| r.hash_bits(x))
        .collect::<Result<Vec<_>>>()?;

    // Column layout: one trial-indexed bitset per input bit and per hash bit.
    let x_cols: Vec<BitVector> = (0..n)
        .into_par_iter()
        .map(|i| BitVector::from_bools(inputs.iter().map(|x| x.get(i))))
        .collect();
    let h_cols: Vec<BitVector> = (0..m)
        .into_par_iter()
        .map(|j| BitVector::from_bools(hashes.iter().map(|h| h.0.get(j))))
        .collect();
    let h_ones: Vec<i64> = h_cols.iter().map(|c| c.count_ones() as i64).collect();
    let t = trials as f64;

    let rows: Vec<(f64, f64)> = x_cols
        .par_iter()
        .enumerate()
        .map(|(i, xc)| {
            let (mut pooled, mut used, mut best) = (0.0f64, 0usize, 0.0f64);
            for (j, hc) in h_cols.iter().enumerate() {
                let both = xc.and_count(hc) as i64;
                let stat = (h_ones[j] - 2 * both) as f64 / t;
                best = best.max(stat.abs());
                let trit = r.trit(j, i);
                if trit != 0 {
                    // A positive entry pushes h_j towards 1 when x_i = 1.
                    pooled -= trit as f64 * stat;
                    used += 1;
                }
            }
            let adv = if used == 0 { 0.0 } else { (pooled / used as f64).abs() };
            (adv, best)
        })
        .collect();

    let per_index: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let max_advantage = per_index.iter().copied().fold(0.0, f64::max);
    let mean_advantage = per_index.iter().sum::<f64>() / n as f64;
    let selected_max = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    // Each statistic has variance ~ 1/(2T) when hash and input are
    // independent; the expected maximum of N such |Gaussians| is about
    // sigma * sqrt(2 ln N).
    let candidates = (n * m) as f64;
    let selection_noise_floor = (1.0 / (2.0 * t)).sqrt() * (2.0 * candidates.ln()).sqrt();
    Ok(BitBalanceReport {
        n,
        m,
        trials,
        seed,
        degenerate: r.is_degenerate(),
        per_index,
        max_advantage,
        mean_advantage,
        selected_max,
        selection_noise_floor,
    })
}

/// Sum of per-coordinate marginal entropies, in bits. This upper-bounds the
/// joint entropy of the distribution the samples come from.
pub fn entropy_estimate(samples: &[BitVector]) -> Result<f64> {
    let first = samples
        .first()
        .ok_or_else(|| LshError::InvalidParameter("entropy needs at least one sample".into()))?;
    let n = first.len();
    if let Some(bad) = samples.iter().find(|s| s.len() != n) {
        return Err(LshError::LengthMismatch { expected: n, got: bad.len() });
    }
    let total = samples.len() as f64;
    let mut ones = vec![0usize; n];
    for s in samples {
        for (w, &word) in s.words().iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                let b = bits.trailing_zeros() as usize;
                ones[w * 64 + b] += 1;
                bits &= bits - 1;
            }
        }
    }
    Ok(ones
        .iter()
        .map(|&c| {
            let p = c as f64 / total;
            if p == 0.0 || p == 1.0 {
                0.0
            } else {
                -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
            }
        })
        .sum())
}

/// Whether the entropy estimate clears `m + lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecurityParams {
    pub lambda: usize,
    pub m: usize,
    pub entropy_estimate: f64,
    pub input_hiding: bool,
}

impl SecurityParams {
    pub fn new(lambda: usize, m: usize, entropy_estimate: f64) -> Self {
        Self {
            lambda,
            m,
            entropy_estimate,
            input_hiding: entropy_estimate >= (m + lambda) as f64,
        }
    }

    /// `n - H(X)`.
    pub fn redundancy(&self, n: usize) -> f64 {
        n as f64 - self.entropy_estimate
    }
}

/// Two weight-`k` binary vectors of length `n` whose overlap is chosen so the
/// angle between them is as close to `theta` as integers allow.
pub fn pair_at_angle<R: Rng>(n: usize, k: usize, theta: f64, rng: &mut R) -> Result<(BitVector, BitVector)> {
    let overlap = ((k as f64) * theta.cos()).round().clamp(0.0, k as f64) as usize;
    let support = 2 * k - overlap;
    if k == 0 || support > n {
        return Err(LshError::InvalidParameter(format!(
            "cannot place two weight-{k} vectors with overlap {overlap} in length {n}"
        )));
    }
    let idx = index::sample(rng, n, support).into_vec();
    let mut a = BitVector::zeros(n);
    let mut b = BitVector::zeros(n);
    for &i in &idx[..k] {
        a.set(i, true);
    }
    for &i in &idx[..overlap] {
        b.set(i, true);
    }
    for &i in &idx[k..] {
        b.set(i, true);
    }
    Ok((a, b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalityRow {
    pub target_theta: f64,
    /// Mean realized angle across pairs.
    pub mean_theta: f64,
    pub expected_agreement: f64,
    pub mean_agreement: f64,
    pub pairs: usize,
}

impl LocalityRow {
    pub fn deviation(&self) -> f64 {
        (self.mean_agreement - self.expected_agreement).abs()
    }
}

/// Measures mean per-bit hash agreement for random pairs at each angle. A fresh
/// projection set is drawn for every block of `pairs_per_projection` pairs.
pub fn eval_locality(
    n: usize,
    m: usize,
    angles: &[f64],
    pairs: usize,
    pairs_per_projection: usize,
    seed: u64,
) -> Result<Vec<LocalityRow>> {
    if pairs == 0 || pairs_per_projection == 0 {
        return Err(LshError::InvalidParameter("pair counts must be positive".into()));
    }
    let k = n / 3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    angles
        .iter()
        .map(|&theta| {
            let blocks = pairs.div_ceil(pairs_per_projection);
            let block_seeds: Vec<u64> = (0..blocks).map(|_| rng.gen()).collect();
            let sums = block_seeds
                .par_iter()
                .enumerate()
                .map(|(b, &bs)| -> Result<(f64, f64, f64)> {
                    let mut brng = ChaCha8Rng::seed_from_u64(bs);
                    let r = sample_projections(n, m, brng.gen())?;
                    let count = pairs_per_projection.min(pairs - b * pairs_per_projection);
                    let (mut agree, mut theta_sum, mut expect) = (0.0, 0.0, 0.0);
                    for _ in 0..count {
                        let (x1, x2) = pair_at_angle(n, k, theta, &mut brng)?;
                        let realized = angle(&x1, &x2)?;
                        let d = hash_hamming(&r.hash_bits(&x1)?, &r.hash_bits(&x2)?)?;
                        agree += 1.0 - d;
                        theta_sum += realized;
                        expect += 1.0 - realized / std::f64::consts::PI;
                    }
                    Ok((agree, theta_sum, expect))
                })
                .collect::<Result<Vec<_>>>()?;
            let (agree, theta_sum, expect) = sums
                .into_iter()
                .fold((0.0, 0.0, 0.0), |acc, s| (acc.0 + s.0, acc.1 + s.1, acc.2 + s.2));
            let p = pairs as f64;
            Ok(LocalityRow {
                target_theta: theta,
                mean_theta: theta_sum / p,
                expected_agreement: expect / p,
                mean_agreement: agree / p,
                pairs,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lsh::collision_prob_bits;

    /// Independent of `preimage_oracle`: walks bit vectors in the same order
    /// with a dense inner product.
    fn brute_force(r: &ProjectionSet, h: &HashVector) -> Vec<BitVector> {
        let n = r.n();
        let mut out = Vec::new();
        for v in 0u64..1 << n {
            let x: Vec<bool> = (0..n).map(|i| (v >> (n - 1 - i)) & 1 == 1).collect();
            let bits: Vec<bool> = (0..r.m())
                .map(|j| {
                    let dot: i64 = r.vector(j).iter().zip(&x).map(|(&t, &b)| if b { t as i64 } else { 0 }).sum();
                    dot >= 0
                })
                .collect();
            if BitVector::from_bools(bits) == h.0 {
                out.push(BitVector::from_bools(x));
            }
        }
        out
    }

    #[test]
    fn oracle_matches_dense_enumeration() {
        for seed in 0..5 {
            let r = sample_projections(10, 3, seed).unwrap();
            let x = BitVector::from_bools((0..10).map(|i| (seed >> (i % 3)) & 1 == 1 || i == 4));
            let h = r.hash_bits(&x).unwrap();
            let got = preimage_oracle(&r, &h).unwrap();
            assert!(got.contains(&x));
            assert_eq!(got, brute_force(&r, &h));
            assert!(got.iter().all(|p| r.hash_bits(p).unwrap() == h));
        }
    }

    #[test]
    fn unreachable_hash_has_no_preimages() {
        // sgn(<x, 0>) = 1 for every x, so any hash with a zero bit is unreachable.
        let r = ProjectionSet::zero(6, 2).unwrap();
        let h = HashVector(BitVector::from_bools([true, false]));
        assert!(preimage_oracle(&r, &h).unwrap().is_empty());
        assert_eq!(preimage_oracle(&r, &HashVector(BitVector::ones(2))).unwrap().len(), 64);
    }

    #[test]
    fn oracle_refuses_large_inputs() {
        let r = sample_projections(21, 2, 0).unwrap();
        let h = HashVector(BitVector::ones(2));
        assert_eq!(preimage_oracle(&r, &h), Err(LshError::TooLarge(21)));
    }

    #[test]
    fn small_census_tracks_two_to_the_n_minus_m() {
        let report = preimage_census(8, 3, 60, 5).unwrap();
        assert_eq!(report.expected, 32.0);
        assert!(report.mean_within_factor(4.0), "mean {}", report.mean);
    }

    #[test]
    fn degenerate_projections_have_no_advantage() {
        let r = ProjectionSet::zero(64, 8).unwrap();
        let report = bit_balance_advantage(&r, 2000, 3).unwrap();
        assert!(report.degenerate);
        assert_eq!(report.max_advantage, 0.0);
        assert!(report.selected_max < 0.1);
    }

    #[test]
    fn bit_balance_is_seed_deterministic() {
        let r = sample_projections(48, 8, 1).unwrap();
        let a = bit_balance_advantage(&r, 1000, 77).unwrap();
        assert_eq!(a, bit_balance_advantage(&r, 1000, 77).unwrap());
        assert!(bit_balance_advantage(&r, 999, 77).is_err());
    }

    #[test]
    fn short_inputs_leak_measurably() {
        // With n = 4 each input bit moves the inner product by a large share
        // of its spread, so the pooled predictor must see it.
        let r = sample_projections(4, 16, 9).unwrap();
        let report = bit_balance_advantage(&r, 5000, 4).unwrap();
        assert!(report.max_advantage > 0.1, "{}", report.max_advantage);
    }

    #[test]
    fn entropy_examples() {
        let x = BitVector::from_bools([true, false, true, true]);
        assert_eq!(entropy_estimate(&[x.clone(), x.clone(), x]).unwrap(), 0.0);
        let all: Vec<BitVector> = (0u8..16).map(|v| BitVector::from_bools((0..4).map(|i| v >> i & 1 == 1))).collect();
        assert!((entropy_estimate(&all).unwrap() - 4.0).abs() < 1e-12);
        assert!(entropy_estimate(&[]).is_err());
    }

    #[test]
    fn uniform_samples_approach_n_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let samples: Vec<BitVector> = (0..2000).map(|_| BitVector::from_bools((0..256).map(|_| rng.gen::<bool>()))).collect();
        let h = entropy_estimate(&samples).unwrap();
        assert!(h > 255.0 && h <= 256.0, "{h}");
    }

    #[test]
    fn security_params_flag() {
        assert!(SecurityParams::new(128, 256, 384.0).input_hiding);
        assert!(!SecurityParams::new(128, 256, 383.9).input_hiding);
        assert_eq!(SecurityParams::new(128, 256, 9000.0).redundancy(9600), 600.0);
    }

    #[test]
    fn pairs_hit_requested_angle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for theta in [std::f64::consts::FRAC_PI_8, std::f64::consts::FRAC_PI_2] {
            let (a, b) = pair_at_angle(900, 300, theta, &mut rng).unwrap();
            assert_eq!(a.count_ones(), 300);
            assert_eq!(b.count_ones(), 300);
            assert!((angle(&a, &b).unwrap() - theta).abs() < 0.01);
            let p = collision_prob_bits(&a, &b).unwrap();
            assert!((p - (1.0 - theta / std::f64::consts::PI)).abs() < 0.01);
        }
    }

    #[test]
    fn agreement_is_monotone_in_noise() {
        let n = 2000;
        let r = sample_projections(n, 128, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let rates = [0.0, 0.05, 0.1, 0.2, 0.3];
        let trials = 200;
        let means: Vec<f64> = rates
            .iter()
            .map(|&p| {
                let mut total = 0.0;
                for _ in 0..trials {
                    let x = BitVector::from_bools((0..n).map(|_| rng.gen::<bool>()));
                    let noisy = BitVector::from_bools(x.iter().map(|b| b ^ rng.gen_bool(p)));
                    total += hash_hamming(&r.hash_bits(&x).unwrap(), &r.hash_bits(&noisy).unwrap()).unwrap();
                }
                total / trials as f64
            })
            .collect();
        assert_eq!(means[0], 0.0);
        for w in means.windows(2) {
            assert!(w[1] >= w[0], "{means:?}");
        }
    }
}
