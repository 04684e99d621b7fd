//! Text encodings for templates, masks and datasets.
//!
//! A matrix record is a header line `IRIS1 <rows> <cols>` followed by one line
//! holding the row-major bits, packed MSB-first and base64 encoded. A scan
//! file is a template record followed by its mask record.

use std::io::{BufRead, Write};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{
    BiometricError, BitMatrix, Dims, IrisTemplate, NoiseMask, Result, Sample, SyntheticDataset,
};
use crate::bits::BitVector;

const MAGIC: &str = "IRIS1";

pub fn encode_matrix_record(m: &BitMatrix) -> String {
    let Dims { rows, cols } = m.dims();
    format!("{MAGIC} {rows} {cols}\n{}\n", B64.encode(m.row_major().to_bytes()))
}

/// Parses every record in `text`, in order.
pub fn decode_matrix_records(text: &str) -> Result<Vec<BitMatrix>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let mut out = Vec::new();
    while let Some(header) = lines.next() {
        let mut parts = header.split_whitespace();
        if parts.next() != Some(MAGIC) {
            return Err(BiometricError::Format(format!("expected {MAGIC} header, got {header:?}")));
        }
        let mut dim = || -> Result<usize> {
            parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| BiometricError::Format(format!("bad header {header:?}")))
        };
        let dims = Dims::new(dim()?, dim()?)?;
        let body = lines
            .next()
            .ok_or_else(|| BiometricError::Format("record body missing".into()))?;
        let bytes = B64
            .decode(body.trim())
            .map_err(|e| BiometricError::Format(e.to_string()))?;
        let bits = BitVector::from_bytes(dims.len(), &bytes)
            .ok_or_else(|| BiometricError::Format("packed bit length does not match header".into()))?;
        out.push(BitMatrix::from_row_major(dims, bits)?);
    }
    Ok(out)
}

pub fn write_scan(template: &IrisTemplate, mask: &NoiseMask) -> String {
    let mut s = encode_matrix_record(&template.0);
    s.push_str(&encode_matrix_record(&mask.0));
    s
}

pub fn read_scan(text: &str) -> Result<(IrisTemplate, NoiseMask)> {
    let mut records = decode_matrix_records(text)?.into_iter();
    match (records.next(), records.next(), records.next()) {
        (Some(t), Some(m), None) => {
            if t.dims() != m.dims() {
                return Err(BiometricError::Format("template and mask dimensions differ".into()));
            }
            Ok((IrisTemplate(t), NoiseMask(m)))
        }
        _ => Err(BiometricError::Format(
            "a scan file holds exactly one template and one mask".into(),
        )),
    }
}

/// One line of a dataset file. `template` and `mask` hold matrix records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetLine {
    pub subject: usize,
    pub sample: usize,
    pub template: String,
    pub mask: String,
}

pub fn encode_dataset_jsonl<W: Write>(ds: &SyntheticDataset, mut w: W) -> std::io::Result<()> {
    for (subject, sample, s) in ds.iter() {
        let line = DatasetLine {
            subject,
            sample,
            template: encode_matrix_record(&s.template.0),
            mask: encode_matrix_record(&s.mask.0),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a dataset file back into `subjects[s][k]` order. Subjects and samples
/// must be dense, starting at zero.
pub fn decode_dataset_jsonl<R: BufRead>(r: R) -> Result<Vec<Vec<Sample>>> {
    let mut subjects: Vec<Vec<Option<Sample>>> = Vec::new();
    for line in r.lines() {
        let line = line.map_err(|e| BiometricError::Format(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DatasetLine =
            serde_json::from_str(&line).map_err(|e| BiometricError::Format(e.to_string()))?;
        let single = |text: &str| -> Result<BitMatrix> {
            let mut v = decode_matrix_records(text)?;
            if v.len() != 1 {
                return Err(BiometricError::Format("expected one matrix per field".into()));
            }
            Ok(v.remove(0))
        };
        let template = IrisTemplate(single(&rec.template)?);
        let mask = NoiseMask(single(&rec.mask)?);
        if subjects.len() <= rec.subject {
            subjects.resize_with(rec.subject + 1, Vec::new);
        }
        let slot = &mut subjects[rec.subject];
        if slot.len() <= rec.sample {
            slot.resize_with(rec.sample + 1, || None);
        }
        slot[rec.sample] = Some(Sample { template, mask });
    }
    subjects
        .into_iter()
        .enumerate()
        .map(|(s, v)| {
            v.into_iter()
                .enumerate()
                .map(|(k, x)| {
                    x.ok_or_else(|| BiometricError::Format(format!("missing subject {s} sample {k}")))
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::biometric::{synth_generate, SynthParams};

    #[test]
    fn record_header_and_round_trip() {
        let m = BitMatrix::from_rows(&[vec![1, 0, 1], vec![0, 1, 1]]).unwrap();
        let text = encode_matrix_record(&m);
        assert!(text.starts_with("IRIS1 2 3\n"));
        // 101011 packed MSB-first -> 0b1010_1100
        assert_eq!(text.lines().nth(1).unwrap(), B64.encode([0xAC]));
        assert_eq!(decode_matrix_records(&text).unwrap(), vec![m]);
    }

    #[test]
    fn malformed_records_are_rejected() {
        assert!(decode_matrix_records("IRIS2 2 3\nrA==\n").is_err());
        assert!(decode_matrix_records("IRIS1 2 3\n").is_err());
        assert!(decode_matrix_records("IRIS1 2 3\nrAA=\n").is_err());
        assert!(decode_matrix_records("IRIS1 0 3\n\n").is_err());
    }

    #[test]
    fn scan_and_dataset_round_trip() {
        let ds = synth_generate(&SynthParams {
            subjects: 3,
            samples_per_subject: 2,
            ..SynthParams::default()
        })
        .unwrap();
        let s = ds.sample(1, 1).unwrap();
        let (t, m) = read_scan(&write_scan(&s.template, &s.mask)).unwrap();
        assert_eq!((&t, &m), (&s.template, &s.mask));

        let mut buf = Vec::new();
        encode_dataset_jsonl(&ds, &mut buf).unwrap();
        assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), 6);
        assert_eq!(decode_dataset_jsonl(buf.as_slice()).unwrap(), ds.subjects);
    }
}
