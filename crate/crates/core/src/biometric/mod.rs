//! Binary iris templates, noise masks and the steps that turn a
//! (template, mask) pair into a linear feature vector.

mod format;
mod synth;

pub use format::{
    decode_dataset_jsonl, decode_matrix_records, encode_dataset_jsonl, encode_matrix_record,
    read_scan, write_scan, DatasetLine,
};
pub use synth::{synth_generate, Sample, SynthParams, SyntheticDataset};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitVector;

pub const DEFAULT_ROWS: usize = 20;
pub const DEFAULT_COLS: usize = 480;
pub const DEFAULT_MAX_SHIFTS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BiometricError {
    #[error("dimension mismatch: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    DimensionMismatch {
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },
    #[error("feature vector length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("global mask requires at least one sample mask")]
    EmptyMaskList,
    #[error("combined mask leaves no valid bits to compare")]
    NoValidBits,
    #[error("type-2 masking needs a global mask")]
    MissingGlobalMask,
    #[error("invalid dimensions {0}x{1}")]
    InvalidDimensions(usize, usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed template data: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, BiometricError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub rows: usize,
    pub cols: usize,
}

impl Dims {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(BiometricError::InvalidDimensions(rows, cols));
        }
        Ok(Self { rows, cols })
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Default for Dims {
    fn default() -> Self {
        Self {
            rows: DEFAULT_ROWS,
            cols: DEFAULT_COLS,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskingMode {
    /// Each sample is masked with its own noise mask.
    #[default]
    Type1,
    /// Every sample is masked with one shared global mask.
    Type2,
}

impl std::str::FromStr for MaskingMode {
    type Err = BiometricError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "type1" | "1" => Ok(Self::Type1),
            "type2" | "2" => Ok(Self::Type2),
            other => Err(BiometricError::InvalidParameter(format!(
                "unknown masking mode {other:?}"
            ))),
        }
    }
}

/// Knobs shared by everything that turns scans into feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BiometricConfig {
    pub dims: Dims,
    pub max_shifts: usize,
    pub masking_mode: MaskingMode,
    /// Try rotations of the probe before comparing against stored hashes.
    pub shift_search: bool,
}

impl Default for BiometricConfig {
    fn default() -> Self {
        Self {
            dims: Dims::default(),
            max_shifts: DEFAULT_MAX_SHIFTS,
            masking_mode: MaskingMode::Type1,
            shift_search: false,
        }
    }
}

/// Row-major binary matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitMatrix {
    dims: Dims,
    bits: BitVector,
}

impl BitMatrix {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            bits: BitVector::zeros(dims.len()),
        }
    }

    pub fn ones(dims: Dims) -> Self {
        Self {
            dims,
            bits: BitVector::ones(dims.len()),
        }
    }

    /// Wraps a row-major bit vector.
    pub fn from_row_major(dims: Dims, bits: BitVector) -> Result<Self> {
        if bits.len() != dims.len() {
            return Err(BiometricError::LengthMismatch(bits.len(), dims.len()));
        }
        Ok(Self { dims, bits })
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let dims = Dims::new(rows.len(), cols)?;
        if rows.iter().any(|r| r.len() != cols) {
            return Err(BiometricError::Format("ragged rows".into()));
        }
        let bits = BitVector::from_bools(rows.iter().flatten().map(|&b| b != 0));
        Ok(Self { dims, bits })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn row_major(&self) -> &BitVector {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits.get(row * self.dims.cols + col)
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits.set(row * self.dims.cols + col, value)
    }

    pub fn count_ones(&self) -> usize {
        self.bits.count_ones()
    }

    fn ensure_same_dims(&self, other: &Self) -> Result<()> {
        if self.dims != other.dims {
            return Err(BiometricError::DimensionMismatch {
                left_rows: self.dims.rows,
                left_cols: self.dims.cols,
                right_rows: other.dims.rows,
                right_cols: other.dims.cols,
            });
        }
        Ok(())
    }
}

/// Extracted iris pattern.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IrisTemplate(pub BitMatrix);

/// Corruption mask paired with a template: 1 marks a corrupt bit.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NoiseMask(pub BitMatrix);

impl IrisTemplate {
    pub fn dims(&self) -> Dims {
        self.0.dims()
    }
}

impl NoiseMask {
    pub fn dims(&self) -> Dims {
        self.0.dims()
    }

    pub fn clear(dims: Dims) -> Self {
        Self(BitMatrix::zeros(dims))
    }

    pub fn valid_bits(&self) -> usize {
        self.0.bits.count_zeros()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedTemplate {
    pub matrix: BitMatrix,
    pub mode: MaskingMode,
}

/// Column-linearized masked template.
///
/// `rows` is the height of one template column, which is the stride of a
/// single template rotation in the linear layout.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeatureVector {
    rows: usize,
    bits: BitVector,
}

impl FeatureVector {
    pub fn new(rows: usize, bits: BitVector) -> Result<Self> {
        if rows == 0 || !bits.len().is_multiple_of(rows) {
            return Err(BiometricError::InvalidParameter(format!(
                "feature vector of length {} cannot have column height {rows}",
                bits.len()
            )));
        }
        Ok(Self { rows, bits })
    }

    /// A vector without template structure; rotations move one bit per step.
    pub fn flat(bits: BitVector) -> Self {
        Self { rows: 1, bits }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &BitVector {
        &self.bits
    }

    pub fn into_bits(self) -> BitVector {
        self.bits
    }
}

pub fn apply_mask_type1(template: &IrisTemplate, mask: &NoiseMask) -> Result<MaskedTemplate> {
    apply(template, mask, MaskingMode::Type1)
}

pub fn apply_mask_type2(template: &IrisTemplate, global_mask: &NoiseMask) -> Result<MaskedTemplate> {
    apply(template, global_mask, MaskingMode::Type2)
}

fn apply(template: &IrisTemplate, mask: &NoiseMask, mode: MaskingMode) -> Result<MaskedTemplate> {
    template.0.ensure_same_dims(&mask.0)?;
    Ok(MaskedTemplate {
        matrix: BitMatrix {
            dims: template.dims(),
            bits: template.0.bits.and_not(&mask.0.bits),
        },
        mode,
    })
}

/// Positionwise AND of all masks.
pub fn compute_global_mask<'a, I>(masks: I) -> Result<NoiseMask>
where
    I: IntoIterator<Item = &'a NoiseMask>,
{
    let mut iter = masks.into_iter();
    let first = iter.next().ok_or(BiometricError::EmptyMaskList)?;
    let mut acc = first.0.clone();
    for m in iter {
        acc.ensure_same_dims(&m.0)?;
        acc.bits = acc.bits.and(&m.0.bits);
    }
    Ok(NoiseMask(acc))
}

/// Concatenates columns left to right, each read top to bottom.
pub fn linearize(mt: &MaskedTemplate) -> FeatureVector {
    let Dims { rows, cols } = mt.matrix.dims;
    let mut bits = BitVector::zeros(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            if mt.matrix.get(r, c) {
                bits.set(c * rows + r, true);
            }
        }
    }
    FeatureVector { rows, bits }
}

/// Cyclic shift by `steps` template columns (`steps * rows` bits).
pub fn rotate(fv: &FeatureVector, steps: isize) -> FeatureVector {
    FeatureVector {
        rows: fv.rows,
        bits: fv.bits.rotate(steps * fv.rows as isize),
    }
}

/// Normalized Hamming distance over the bits both masks mark valid.
pub fn masked_hamming(
    t1: &IrisTemplate,
    m1: &NoiseMask,
    t2: &IrisTemplate,
    m2: &NoiseMask,
) -> Result<f64> {
    t1.0.ensure_same_dims(&m1.0)?;
    t1.0.ensure_same_dims(&t2.0)?;
    t1.0.ensure_same_dims(&m2.0)?;
    let c_mask = m1.0.bits.and(&m2.0.bits);
    let valid = c_mask.count_zeros();
    if valid == 0 {
        return Err(BiometricError::NoValidBits);
    }
    let a = t1.0.bits.and_not(&c_mask);
    let b = t2.0.bits.and_not(&c_mask);
    Ok(a.hamming(&b) as f64 / valid as f64)
}

pub fn normalized_hamming(fv1: &FeatureVector, fv2: &FeatureVector) -> Result<f64> {
    if fv1.len() != fv2.len() {
        return Err(BiometricError::LengthMismatch(fv1.len(), fv2.len()));
    }
    if fv1.is_empty() {
        return Ok(0.0);
    }
    Ok(fv1.bits.hamming(&fv2.bits) as f64 / fv1.len() as f64)
}

/// Best (lowest) normalized Hamming distance over rotations of `fv2` in
/// `[-max_shifts, max_shifts]`.
pub fn min_shift_distance(fv1: &FeatureVector, fv2: &FeatureVector, max_shifts: usize) -> Result<f64> {
    if fv1.len() != fv2.len() {
        return Err(BiometricError::LengthMismatch(fv1.len(), fv2.len()));
    }
    if fv1.is_empty() {
        return Ok(0.0);
    }
    let s = max_shifts as isize;
    let best = (-s..=s)
        .map(|k| fv1.bits.hamming(&rotate(fv2, k).bits))
        .min()
        .unwrap_or(0);
    Ok(best as f64 / fv1.len() as f64)
}

/// Masks a scan according to `mode` and linearizes it.
pub fn extract_feature_vector(
    template: &IrisTemplate,
    mask: &NoiseMask,
    mode: MaskingMode,
    global_mask: Option<&NoiseMask>,
) -> Result<FeatureVector> {
    let masked = match mode {
        MaskingMode::Type1 => apply_mask_type1(template, mask)?,
        MaskingMode::Type2 => {
            apply_mask_type2(template, global_mask.ok_or(BiometricError::MissingGlobalMask)?)?
        }
    };
    Ok(linearize(&masked))
}
