//! `PSDF` feature container and CSV export.
//!
//! Layout: magic `PSDF`, `u16` version, then records until end of file. Each
//! record is a `u32` byte length and UTF-8 utterance id, `u32` rows, `u32`
//! cols, and `rows * cols` little-endian `f32` values in row-major order.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use super::{FeatureError, FeatureVector, FEATURE_WIDTH};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"PSDF";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub utterance_id: String,
    pub data: Array2<f32>,
}

impl FeatureRecord {
    pub fn from_vector<T: Scalar>(utterance_id: impl Into<String>, v: &FeatureVector<T>) -> Self {
        let data = Array2::from_shape_fn((1, v.len()), |(_, j)| v.values()[j].as_f64() as f32);
        FeatureRecord { utterance_id: utterance_id.into(), data }
    }

    pub fn from_matrix<T: Scalar>(utterance_id: impl Into<String>, m: &Array2<T>) -> Self {
        FeatureRecord { utterance_id: utterance_id.into(), data: m.mapv(|v| v.as_f64() as f32) }
    }

    /// Interprets a `1 x 178` record as a feature vector.
    pub fn to_vector<T: Scalar>(&self) -> Result<FeatureVector<T>, FeatureError> {
        if self.data.dim() != (1, FEATURE_WIDTH) {
            return Err(FeatureError::ConfigMismatch { expected: FEATURE_WIDTH, found: self.data.len() });
        }
        FeatureVector::new(self.data.iter().map(|&v| T::of(v as f64)).collect())
    }
}

pub fn encode_container(records: &[FeatureRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for rec in records {
        let id = rec.utterance_id.as_bytes();
        out.extend_from_slice(&(id.len() as u32).to_le_bytes());
        out.extend_from_slice(id);
        out.extend_from_slice(&(rec.data.nrows() as u32).to_le_bytes());
        out.extend_from_slice(&(rec.data.ncols() as u32).to_le_bytes());
        for v in rec.data.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_container(bytes: &[u8]) -> Result<Vec<FeatureRecord>, FeatureError> {
    let corrupt = |m: &str| FeatureError::CorruptContainer(m.to_string());
    if bytes.len() < 6 || &bytes[..4] != MAGIC {
        return Err(corrupt("missing PSDF magic"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(corrupt(&format!("unsupported version {version}")));
    }
    let mut pos = 6;
    let mut take = |n: usize| -> Result<&[u8], FeatureError> {
        if pos + n > bytes.len() {
            return Err(corrupt("truncated record"));
        }
        let s = &bytes[pos..pos + n];
        pos += n;
        Ok(s)
    };
    let u32_of = |b: &[u8]| u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize;

    let mut records = Vec::new();
    while let Ok(len_bytes) = take(4) {
        let id_len = u32_of(len_bytes);
        let id = std::str::from_utf8(take(id_len)?).map_err(|_| corrupt("utterance id is not UTF-8"))?.to_string();
        let rows = u32_of(take(4)?);
        let cols = u32_of(take(4)?);
        let payload = take(rows.checked_mul(cols).and_then(|n| n.checked_mul(4)).ok_or_else(|| corrupt("record too large"))?)?;
        let values: Vec<f32> = payload.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        let data = Array2::from_shape_vec((rows, cols), values).map_err(|_| corrupt("bad record shape"))?;
        records.push(FeatureRecord { utterance_id: id, data });
    }
    // a dangling partial length prefix is corruption, not end of stream
    if pos != bytes.len() {
        return Err(corrupt("trailing bytes after last record"));
    }
    Ok(records)
}

pub fn write_container(path: impl AsRef<Path>, records: &[FeatureRecord]) -> Result<(), FeatureError> {
    let path = path.as_ref();
    std::fs::write(path, encode_container(records)).map_err(|e| FeatureError::Io(format!("{}: {e}", path.display())))
}

pub fn read_container(path: impl AsRef<Path>) -> Result<Vec<FeatureRecord>, FeatureError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| FeatureError::Io(format!("{}: {e}", path.display())))?;
    decode_container(&bytes)
}

/// Loads a container of `1 x 178` records keyed by utterance id.
pub fn read_vectors<T: Scalar>(path: impl AsRef<Path>) -> Result<BTreeMap<String, FeatureVector<T>>, FeatureError> {
    read_container(path)?.iter().map(|r| Ok((r.utterance_id.clone(), r.to_vector()?))).collect()
}

/// CSV with header `utterance_id,f000,...`; one line per row of every record.
pub fn write_csv<W: Write>(out: W, records: &[FeatureRecord]) -> Result<(), FeatureError> {
    let io_err = |e: csv::Error| FeatureError::Io(e.to_string());
    let width = records.first().map_or(FEATURE_WIDTH, |r| r.data.ncols());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["utterance_id".to_string()];
    header.extend((0..width).map(|j| format!("f{j:03}")));
    w.write_record(&header).map_err(io_err)?;
    for rec in records {
        if rec.data.ncols() != width {
            return Err(FeatureError::ConfigMismatch { expected: width, found: rec.data.ncols() });
        }
        for row in rec.data.rows() {
            let mut line = vec![rec.utterance_id.clone()];
            line.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&line).map_err(io_err)?;
        }
    }
    w.flush().map_err(|e| FeatureError::Io(e.to_string()))
}
