//! Fixed-length packed bit vectors.
//!
//! Bit `i` lives in word `i / 64` at position `i % 64`. Bits past `len` in the
//! last word are always zero, so word-wise popcounts never see garbage.

use std::fmt;

const WORD_BITS: usize = 64;

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitVector {
    len: usize,
    words: Vec<u64>,
}

#[inline]
fn words_for(len: usize) -> usize {
    len.div_ceil(WORD_BITS)
}

impl BitVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            words: vec![0; words_for(len)],
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut v = Self {
            len,
            words: vec![u64::MAX; words_for(len)],
        };
        v.clear_tail();
        v
    }

    pub fn from_bools<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut words = Vec::new();
        let mut len = 0;
        for b in bits {
            if len % WORD_BITS == 0 {
                words.push(0);
            }
            if b {
                words[len / WORD_BITS] |= 1 << (len % WORD_BITS);
            }
            len += 1;
        }
        Self { len, words }
    }

    /// Builds a vector from raw words, masking off anything past `len`.
    pub fn from_words(len: usize, mut words: Vec<u64>) -> Self {
        words.resize(words_for(len), 0);
        let mut v = Self { len, words };
        v.clear_tail();
        v
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        (self.words[i / WORD_BITS] >> (i % WORD_BITS)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        let mask = 1u64 << (i % WORD_BITS);
        if value {
            self.words[i / WORD_BITS] |= mask;
        } else {
            self.words[i / WORD_BITS] &= !mask;
        }
    }

    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        self.words[i / WORD_BITS] ^= 1u64 << (i % WORD_BITS);
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn count_zeros(&self) -> usize {
        self.len - self.count_ones()
    }

    /// Number of positions set in both vectors.
    pub fn and_count(&self, other: &Self) -> usize {
        self.check_len(other);
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    /// Number of differing positions.
    pub fn hamming(&self, other: &Self) -> usize {
        self.check_len(other);
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    pub fn and(&self, other: &Self) -> Self {
        self.zip_words(other, |a, b| a & b)
    }

    pub fn or(&self, other: &Self) -> Self {
        self.zip_words(other, |a, b| a | b)
    }

    pub fn xor(&self, other: &Self) -> Self {
        self.zip_words(other, |a, b| a ^ b)
    }

    /// `self AND NOT other`.
    pub fn and_not(&self, other: &Self) -> Self {
        self.zip_words(other, |a, b| a & !b)
    }

    pub fn not(&self) -> Self {
        let mut v = Self {
            len: self.len,
            words: self.words.iter().map(|w| !w).collect(),
        };
        v.clear_tail();
        v
    }

    /// True when every set bit of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.check_len(other);
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    /// Cyclic rotation towards higher indices: bit `i` moves to `(i + k) mod len`.
    /// Negative `k` rotates towards lower indices.
    pub fn rotate(&self, k: isize) -> Self {
        if self.len == 0 {
            return self.clone();
        }
        let k = k.rem_euclid(self.len as isize) as usize;
        if k == 0 {
            return self.clone();
        }
        let high = self.shl(k);
        let low = self.shr(self.len - k);
        high.or(&low)
    }

    fn shl(&self, k: usize) -> Self {
        let n = self.words.len();
        let (q, r) = (k / WORD_BITS, k % WORD_BITS);
        let mut words = vec![0u64; n];
        for i in (q..n).rev() {
            let src = i - q;
            let mut w = self.words[src] << r;
            if r != 0 && src > 0 {
                w |= self.words[src - 1] >> (WORD_BITS - r);
            }
            words[i] = w;
        }
        let mut v = Self { len: self.len, words };
        v.clear_tail();
        v
    }

    fn shr(&self, k: usize) -> Self {
        let n = self.words.len();
        let (q, r) = (k / WORD_BITS, k % WORD_BITS);
        let mut words = vec![0u64; n];
        for i in 0..n.saturating_sub(q) {
            let src = i + q;
            let mut w = self.words[src] >> r;
            if r != 0 && src + 1 < n {
                w |= self.words[src + 1] << (WORD_BITS - r);
            }
            words[i] = w;
        }
        Self { len: self.len, words }
    }

    /// Packs bits MSB-first into bytes; the final byte is zero-padded.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.len.div_ceil(8)];
        for i in 0..self.len {
            if self.get(i) {
                out[i / 8] |= 0x80 >> (i % 8);
            }
        }
        out
    }

    /// Inverse of [`BitVector::to_bytes`]. Returns `None` when the byte count is
    /// wrong or a padding bit is set.
    pub fn from_bytes(len: usize, bytes: &[u8]) -> Option<Self> {
        if bytes.len() != len.div_ceil(8) {
            return None;
        }
        let pad = bytes.len() * 8 - len;
        if pad > 0 && bytes[bytes.len() - 1] & ((1u8 << pad) - 1) != 0 {
            return None;
        }
        let mut v = Self::zeros(len);
        for i in 0..len {
            if bytes[i / 8] & (0x80 >> (i % 8)) != 0 {
                v.set(i, true);
            }
        }
        Some(v)
    }

    fn zip_words(&self, other: &Self, f: impl Fn(u64, u64) -> u64) -> Self {
        self.check_len(other);
        Self {
            len: self.len,
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    fn clear_tail(&mut self) {
        let rem = self.len % WORD_BITS;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    #[inline]
    fn check_len(&self, other: &Self) {
        assert_eq!(self.len, other.len, "bit vector length mismatch");
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVector[{}](", self.len)?;
        if self.len <= 64 {
            for b in self.iter() {
                f.write_str(if b { "1" } else { "0" })?;
            }
        } else {
            write!(f, "{} ones", self.count_ones())?;
        }
        f.write_str(")")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive_rotate(v: &BitVector, k: isize) -> BitVector {
        let n = v.len() as isize;
        let mut out = BitVector::zeros(v.len());
        for i in 0..v.len() {
            let j = (i as isize + k).rem_euclid(n) as usize;
            out.set(j, v.get(i));
        }
        out
    }

    #[test]
    fn ones_has_clean_tail() {
        let v = BitVector::ones(70);
        assert_eq!(v.count_ones(), 70);
        assert_eq!(v.not().count_ones(), 0);
    }

    #[test]
    fn byte_packing_is_msb_first() {
        let v = BitVector::from_bools([true, false, false, false, false, false, false, true, true]);
        assert_eq!(v.to_bytes(), vec![0x81, 0x80]);
    }

    #[test]
    fn from_bytes_rejects_padding_bits() {
        assert!(BitVector::from_bytes(9, &[0x00, 0x40]).is_none());
        assert!(BitVector::from_bytes(9, &[0x00]).is_none());
        assert!(BitVector::from_bytes(9, &[0x00, 0x80]).is_some());
    }

    proptest! {
        #[test]
        fn rotate_matches_naive(bits in proptest::collection::vec(any::<bool>(), 1..300), k in -400isize..400) {
            let v = BitVector::from_bools(bits);
            prop_assert_eq!(v.rotate(k), naive_rotate(&v, k));
        }

        #[test]
        fn bytes_round_trip(bits in proptest::collection::vec(any::<bool>(), 0..200)) {
            let v = BitVector::from_bools(bits);
            prop_assert_eq!(BitVector::from_bytes(v.len(), &v.to_bytes()), Some(v));
        }

        #[test]
        fn hamming_is_xor_popcount(a in proptest::collection::vec(any::<bool>(), 130), b in proptest::collection::vec(any::<bool>(), 130)) {
            let expected = a.iter().zip(&b).filter(|(x, y)| x != y).count();
            prop_assert_eq!(BitVector::from_bools(a).hamming(&BitVector::from_bools(b)), expected);
        }
    }
}
