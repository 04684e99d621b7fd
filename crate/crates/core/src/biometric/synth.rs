//! Seeded synthetic iris data.
//!
//! Each subject gets a uniform base template and a pair of eyelid-like
//! occlusion bands whose placement is fixed per subject. Samples flip base
//! bits independently at `p_intra` and jitter the occlusion bands slightly.

use rand::distributions::{Bernoulli, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BiometricError, BitMatrix, Dims, IrisTemplate, NoiseMask, Result};
use crate::bits::BitVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub dims: Dims,
    pub subjects: usize,
    pub samples_per_subject: usize,
    pub p_intra: f64,
    pub mask_density: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            dims: Dims::default(),
            subjects: 50,
            samples_per_subject: 5,
            p_intra: 0.1,
            mask_density: 0.15,
            seed: 0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.p_intra) {
            return Err(BiometricError::InvalidParameter(format!(
                "p_intra must lie in [0, 0.5), got {}",
                self.p_intra
            )));
        }
        if !(0.0..1.0).contains(&self.mask_density) {
            return Err(BiometricError::InvalidParameter(format!(
                "mask_density must lie in [0, 1), got {}",
                self.mask_density
            )));
        }
        if self.subjects == 0 || self.samples_per_subject == 0 {
            return Err(BiometricError::InvalidParameter(
                "subjects and samples_per_subject must be positive".into(),
            ));
        }
        Dims::new(self.dims.rows, self.dims.cols)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub template: IrisTemplate,
    pub mask: NoiseMask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub params: SynthParams,
    /// `subjects[s][k]` is sample `k` of subject `s`.
    pub subjects: Vec<Vec<Sample>>,
}

impl SyntheticDataset {
    pub fn sample(&self, subject: usize, sample: usize) -> Option<&Sample> {
        self.subjects.get(subject)?.get(sample)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &Sample)> {
        self.subjects
            .iter()
            .enumerate()
            .flat_map(|(s, v)| v.iter().enumerate().map(move |(k, x)| (s, k, x)))
    }

    pub fn len(&self) -> usize {
        self.subjects.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Occlusion band: rows `[row_start, rows)` over a cyclic column arc.
#[derive(Debug, Clone, Copy)]
struct Band {
    row_start: usize,
    center: usize,
    width: usize,
}

#[derive(Debug, Clone)]
struct SubjectModel {
    base: BitVector,
    bands: [Band; 2],
}

pub fn synth_generate(params: &SynthParams) -> Result<SyntheticDataset> {
    params.validate()?;
    let subjects = (0..params.subjects)
        .map(|s| generate_subject(params, s as u64))
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticDataset {
        params: params.clone(),
        subjects,
    })
}

/// Each subject draws from its own ChaCha stream, so adding subjects never
/// changes the ones already generated.
fn generate_subject(params: &SynthParams, subject: u64) -> Result<Vec<Sample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(subject);
    let model = subject_model(params, &mut rng);
    let flip = Bernoulli::new(params.p_intra)
        .map_err(|e| BiometricError::InvalidParameter(e.to_string()))?;
    let dims = params.dims;
    (0..params.samples_per_subject)
        .map(|_| {
            let mut bits = model.base.clone();
            if params.p_intra > 0.0 {
                for i in 0..bits.len() {
                    if flip.sample(&mut rng) {
                        bits.flip(i);
                    }
                }
            }
            let mask = sample_mask(dims, &model.bands, params.mask_density, &mut rng);
            Ok(Sample {
                template: IrisTemplate(BitMatrix::from_row_major(dims, bits)?),
                mask,
            })
        })
        .collect()
}

fn subject_model(params: &SynthParams, rng: &mut ChaCha8Rng) -> SubjectModel {
    let dims = params.dims;
    let base = BitVector::from_bools((0..dims.len()).map(|_| rng.gen::<bool>()));
    let target = (params.mask_density * dims.len() as f64).round() as usize;
    // Two opposite arcs over the outer half of the rows; fall back to the full
    // height when the half-band cannot hold the target.
    let mut height = dims.rows.div_ceil(2);
    if target > height * dims.cols {
        height = dims.rows;
    }
    let width = (target as f64 / (2 * height) as f64).round() as usize;
    let width = width.min(dims.cols / 2);
    let center = rng.gen_range(0..dims.cols);
    let band = |center| Band {
        row_start: dims.rows - height,
        center,
        width,
    };
    SubjectModel {
        base,
        bands: [band(center), band((center + dims.cols / 2) % dims.cols)],
    }
}

fn sample_mask(dims: Dims, bands: &[Band; 2], density: f64, rng: &mut ChaCha8Rng) -> NoiseMask {
    let mut m = BitMatrix::zeros(dims);
    if density == 0.0 {
        return NoiseMask(m);
    }
    for band in bands {
        let jitter = (band.width / 10).max(1) as isize;
        let width = (band.width as isize + rng.gen_range(-jitter..=jitter)).clamp(0, dims.cols as isize / 2) as usize;
        let shift = rng.gen_range(-2isize..=2);
        let start = band.center as isize + shift - (width / 2) as isize;
        for dc in 0..width {
            let c = (start + dc as isize).rem_euclid(dims.cols as isize) as usize;
            for r in band.row_start..dims.rows {
                m.set(r, c, true);
            }
        }
    }
    NoiseMask(m)
}
