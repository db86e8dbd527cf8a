//! Model files: `PSNN` magic, format version, class count, input length, the
//! architecture hash, the standardiser, then every parameter tensor in declared
//! order. All numbers are little-endian; values are stored as `f64`.

use std::path::Path;

use ndarray::Array1;

use super::{Model, ModelSpec, NnError, Params, Standardizer, INPUT_LEN};
use crate::scalar::Scalar;

pub const MODEL_MAGIC: &[u8; 4] = b"PSNN";
pub const MODEL_VERSION: u16 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_values<T: Scalar>(out: &mut Vec<u8>, values: &[T]) {
    put_u32(out, values.len());
    for v in values {
        out.extend_from_slice(&v.as_f64().to_le_bytes());
    }
}

impl<T: Scalar> Model<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 * self.params.len() + 4096);
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        put_u32(&mut out, self.n_classes());
        put_u32(&mut out, INPUT_LEN);
        out.extend_from_slice(&self.spec().hash());
        put_values(&mut out, self.standardizer.mean.as_slice().expect("standard layout"));
        put_values(&mut out, self.standardizer.std.as_slice().expect("standard layout"));
        for tensor in self.params.tensors() {
            put_values(&mut out, tensor);
        }
        out
    }

    /// Parses a model file; the architecture hash must match the class count it declares.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MODEL_MAGIC {
            return Err(NnError::CorruptFile("missing PSNN magic".into()));
        }
        let version = u16::from_le_bytes(r.take(2)?.try_into().expect("two bytes"));
        if version != MODEL_VERSION {
            return Err(NnError::VersionMismatch(format!("format version {version}, expected {MODEL_VERSION}")));
        }
        let n_classes = r.u32()?;
        let input_len = r.u32()?;
        if input_len != INPUT_LEN {
            return Err(NnError::VersionMismatch(format!("input length {input_len}, expected {INPUT_LEN}")));
        }
        let spec = ModelSpec::new(n_classes).map_err(|_| NnError::CorruptFile(format!("class count {n_classes}")))?;
        if r.take(32)? != spec.hash() {
            return Err(NnError::VersionMismatch("architecture hash differs from this build".into()));
        }
        let mean = Array1::from(r.values::<T>(INPUT_LEN)?);
        let std = Array1::from(r.values::<T>(INPUT_LEN)?);
        let mut params = Params::zeros(&spec);
        for tensor in params.tensors_mut() {
            let values = r.values::<T>(tensor.len())?;
            tensor.copy_from_slice(&values);
        }
        if r.pos != bytes.len() {
            return Err(NnError::CorruptFile(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        if !params.all_finite() {
            return Err(NnError::CorruptFile("non-finite parameter".into()));
        }
        Ok(Model::from_parts(spec, params, Standardizer { mean, std }, 0))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| NnError::CorruptFile(format!("truncated at byte {} (needed {n} more)", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")) as usize)
    }

    fn values<T: Scalar>(&mut self, expected: usize) -> Result<Vec<T>, NnError> {
        let n = self.u32()?;
        if n != expected {
            return Err(NnError::CorruptFile(format!("tensor of {n} values where {expected} expected")));
        }
        Ok(self.take(8 * n)?.chunks_exact(8).map(|c| T::of(f64::from_le_bytes(c.try_into().expect("eight bytes")))).collect())
    }
}

pub fn save_model<T: Scalar>(model: &Model<T>, path: impl AsRef<Path>) -> Result<(), NnError> {
    let path = path.as_ref();
    std::fs::write(path, model.to_bytes()).map_err(|source| NnError::Io { path: path.display().to_string(), source })
}

pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<Model<T>, NnError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| NnError::Io { path: path.display().to_string(), source })?;
    Model::from_bytes(&bytes)
}

/// Loads a model and rejects it unless its architecture equals `spec`.
pub fn load_model_expecting<T: Scalar>(path: impl AsRef<Path>, spec: &ModelSpec) -> Result<Model<T>, NnError> {
    let model = load_model(path)?;
    if model.spec() != spec {
        return Err(NnError::VersionMismatch(format!("model has {} classes, expected {}", model.n_classes(), spec.n_classes)));
    }
    Ok(model)
}
