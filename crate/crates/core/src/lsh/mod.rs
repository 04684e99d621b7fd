//! Sign-of-random-projection hashing with ternary projection vectors.
//!
//! Each hash bit is the sign of the integer inner product between the binary
//! input and one projection vector with entries in {-1, 0, 1}. A projection
//! vector is stored as two masks (`plus`, `minus`), so the inner product is
//! `popcount(x & plus) - popcount(x & minus)`.

mod security;

pub use security::{
    bit_balance_advantage, entropy_estimate, eval_locality, pair_at_angle, preimage_census,
    preimage_oracle, BitBalanceReport, CensusReport, LocalityRow, SecurityParams,
    MAX_ORACLE_BITS,
};

use std::fmt;
use std::str::FromStr;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::biometric::FeatureVector;
use crate::bits::BitVector;

pub const DEFAULT_HASH_BITS: usize = 256;
pub const DEFAULT_LAMBDA: usize = 128;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LshError {
    #[error("projection sizes must be positive (n = {n}, m = {m})")]
    ZeroSize { n: usize, m: usize },
    #[error("input length {got} does not match projection length {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("angle undefined for a zero vector")]
    ZeroVector,
    #[error("exhaustive enumeration refused for n = {0} (limit {MAX_ORACLE_BITS})")]
    TooLarge(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed serialization: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, LshError>;

/// Maps negative integers to 0 and everything else, zero included, to 1.
#[inline]
pub fn sgn(z: i64) -> bool {
    z >= 0
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectionSet {
    n: usize,
    seed: Option<u64>,
    plus: Vec<BitVector>,
    minus: Vec<BitVector>,
}

impl ProjectionSet {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.plus.len()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Entry `i` of projection vector `j`.
    pub fn trit(&self, j: usize, i: usize) -> i8 {
        match (self.plus[j].get(i), self.minus[j].get(i)) {
            (true, _) => 1,
            (_, true) => -1,
            _ => 0,
        }
    }

    pub fn vector(&self, j: usize) -> Vec<i8> {
        (0..self.n).map(|i| self.trit(j, i)).collect()
    }

    pub fn from_trits(vectors: &[Vec<i8>]) -> Result<Self> {
        let n = vectors.first().map_or(0, Vec::len);
        if n == 0 || vectors.is_empty() {
            return Err(LshError::ZeroSize { n, m: vectors.len() });
        }
        let mut plus = Vec::with_capacity(vectors.len());
        let mut minus = Vec::with_capacity(vectors.len());
        for v in vectors {
            if v.len() != n {
                return Err(LshError::LengthMismatch { expected: n, got: v.len() });
            }
            if let Some(bad) = v.iter().find(|t| !(-1..=1).contains(*t)) {
                return Err(LshError::InvalidParameter(format!("entry {bad} is not a trit")));
            }
            plus.push(BitVector::from_bools(v.iter().map(|&t| t == 1)));
            minus.push(BitVector::from_bools(v.iter().map(|&t| t == -1)));
        }
        Ok(Self { n, seed: None, plus, minus })
    }

    /// A set whose vectors are all zero; every input hashes to all ones.
    pub fn zero(n: usize, m: usize) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(LshError::ZeroSize { n, m });
        }
        Ok(Self {
            n,
            seed: None,
            plus: vec![BitVector::zeros(n); m],
            minus: vec![BitVector::zeros(n); m],
        })
    }

    pub fn is_degenerate(&self) -> bool {
        self.plus.iter().chain(&self.minus).all(|v| v.count_ones() == 0)
    }

    /// Integer inner product of `x` with projection vector `j`.
    #[inline]
    pub fn project(&self, j: usize, x: &BitVector) -> i64 {
        x.and_count(&self.plus[j]) as i64 - x.and_count(&self.minus[j]) as i64
    }

    pub fn hash_bits(&self, x: &BitVector) -> Result<HashVector> {
        if x.len() != self.n {
            return Err(LshError::LengthMismatch { expected: self.n, got: x.len() });
        }
        Ok(HashVector(BitVector::from_bools(
            (0..self.m()).map(|j| sgn(self.project(j, x))),
        )))
    }

    /// Header line `S3H1 n m seed` (seed `-` when unknown), then one base64
    /// line per vector with four 2-bit trits per byte, MSB first:
    /// `00` = 0, `01` = 1, `10` = -1.
    pub fn to_text(&self) -> String {
        let seed = self.seed.map_or_else(|| "-".to_string(), |s| s.to_string());
        let mut out = format!("S3H1 {} {} {seed}\n", self.n, self.m());
        for j in 0..self.m() {
            let mut bytes = vec![0u8; self.n.div_ceil(4)];
            for i in 0..self.n {
                let code = match self.trit(j, i) {
                    1 => 0b01,
                    -1 => 0b10,
                    _ => 0b00,
                };
                bytes[i / 4] |= code << (6 - 2 * (i % 4));
            }
            out.push_str(&B64.encode(bytes));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| LshError::Format("empty input".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != "S3H1" {
            return Err(LshError::Format(format!("bad header {header:?}")));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| LshError::Format(format!("bad number {s:?}")));
        let (n, m) = (parse(fields[1])?, parse(fields[2])?);
        let seed = match fields[3] {
            "-" => None,
            s => Some(s.parse::<u64>().map_err(|_| LshError::Format(format!("bad seed {s:?}")))?),
        };
        let mut vectors = Vec::with_capacity(m);
        for line in lines.by_ref().take(m) {
            let bytes = B64.decode(line.trim()).map_err(|e| LshError::Format(e.to_string()))?;
            if bytes.len() != n.div_ceil(4) {
                return Err(LshError::Format("vector byte length does not match n".into()));
            }
            let mut v = Vec::with_capacity(n);
            for i in 0..bytes.len() * 4 {
                let code = (bytes[i / 4] >> (6 - 2 * (i % 4))) & 0b11;
                let trit = match code {
                    0b00 => 0,
                    0b01 => 1,
                    0b10 => -1,
                    _ => return Err(LshError::Format("invalid trit code 11".into())),
                };
                if i < n {
                    v.push(trit);
                } else if trit != 0 {
                    return Err(LshError::Format("nonzero padding trit".into()));
                }
            }
            vectors.push(v);
        }
        if vectors.len() != m || lines.next().is_some() {
            return Err(LshError::Format(format!("expected exactly {m} vectors")));
        }
        let mut set = Self::from_trits(&vectors)?;
        set.seed = seed;
        Ok(set)
    }
}

/// Draws `m` vectors of length `n` with i.i.d. uniform entries in {-1, 0, 1}.
pub fn sample_projections(n: usize, m: usize, seed: u64) -> Result<ProjectionSet> {
    if n == 0 || m == 0 {
        return Err(LshError::ZeroSize { n, m });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plus = Vec::with_capacity(m);
    let mut minus = Vec::with_capacity(m);
    for _ in 0..m {
        let mut p = BitVector::zeros(n);
        let mut q = BitVector::zeros(n);
        for i in 0..n {
            match rng.gen_range(0u8..3) {
                0 => q.set(i, true),
                2 => p.set(i, true),
                _ => {}
            }
        }
        plus.push(p);
        minus.push(q);
    }
    Ok(ProjectionSet {
        n,
        seed: Some(seed),
        plus,
        minus,
    })
}

/// Bit `i` is `sgn(<x, r_i>)`.
pub fn s3hash(r: &ProjectionSet, x: &FeatureVector) -> Result<HashVector> {
    r.hash_bits(x.bits())
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HashVector(pub BitVector);

impl HashVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &BitVector {
        &self.0
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.0.to_bytes()
    }

    pub fn from_bytes(m: usize, bytes: &[u8]) -> Option<Self> {
        BitVector::from_bytes(m, bytes).map(Self)
    }

    /// Lowercase hex of the MSB-first packed bits.
    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes())
    }

    pub fn from_hex(m: usize, s: &str) -> Result<Self> {
        if s.chars().any(|c| c.is_ascii_uppercase()) {
            return Err(LshError::Format("hash hex must be lowercase".into()));
        }
        let bytes = hex::decode(s).map_err(|e| LshError::Format(e.to_string()))?;
        Self::from_bytes(m, &bytes).ok_or_else(|| LshError::Format("hash length does not match m".into()))
    }
}

impl fmt::Debug for HashVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HashVector({})", self.to_hex())
    }
}

impl fmt::Display for HashVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for HashVector {
    type Err = LshError;

    /// Parses hex, assuming the bit length is a whole number of bytes.
    fn from_str(s: &str) -> Result<Self> {
        Self::from_hex(s.len() * 4, s)
    }
}

/// Fraction of differing bits.
pub fn hash_hamming(h1: &HashVector, h2: &HashVector) -> Result<f64> {
    if h1.len() != h2.len() {
        return Err(LshError::LengthMismatch { expected: h1.len(), got: h2.len() });
    }
    if h1.is_empty() {
        return Ok(0.0);
    }
    Ok(h1.0.hamming(&h2.0) as f64 / h1.len() as f64)
}

/// Angle between two nonzero binary vectors, in radians.
pub fn angle(x1: &BitVector, x2: &BitVector) -> Result<f64> {
    if x1.len() != x2.len() {
        return Err(LshError::LengthMismatch { expected: x1.len(), got: x2.len() });
    }
    let (a, b) = (x1.count_ones(), x2.count_ones());
    if a == 0 || b == 0 {
        return Err(LshError::ZeroVector);
    }
    let cos = x1.and_count(x2) as f64 / ((a as f64) * (b as f64)).sqrt();
    Ok(cos.clamp(-1.0, 1.0).acos())
}

/// Per-bit agreement probability `1 - theta / pi` for two inputs.
pub fn collision_prob(x1: &FeatureVector, x2: &FeatureVector) -> Result<f64> {
    collision_prob_bits(x1.bits(), x2.bits())
}

pub fn collision_prob_bits(x1: &BitVector, x2: &BitVector) -> Result<f64> {
    Ok(1.0 - angle(x1, x2)? / std::f64::consts::PI)
}
