//! Binary model files: magic, version, hash width, label vocabulary, then
//! the dense weight vector as little-endian binary64.

use bqstruct_core::model::ModelVector;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

pub const MODEL_MAGIC: [u8; 4] = *b"BQSM";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ModelIoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a usable model file: {0}")]
    Format(String),
}

#[derive(Debug)]
pub struct SavedModel {
    pub w: ModelVector,
    pub labels: Vec<String>,
}

pub fn save_model(path: &Path, w: &ModelVector, labels: &[String]) -> io::Result<()> {
    let mut buf = Vec::with_capacity(32 + w.len() * 8);
    buf.extend_from_slice(&MODEL_MAGIC);
    buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    buf.extend_from_slice(&w.hash_bits().to_le_bytes());
    buf.extend_from_slice(&(labels.len() as u32).to_le_bytes());
    for label in labels {
        buf.extend_from_slice(&(label.len() as u32).to_le_bytes());
        buf.extend_from_slice(label.as_bytes());
    }
    buf.extend_from_slice(&(w.len() as u64).to_le_bytes());
    for v in w.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelIoError> {
        if self.pos + n > self.data.len() {
            return Err(ModelIoError::Format("unexpected end of file".into()));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelIoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelIoError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn load_model(path: &Path) -> Result<SavedModel, ModelIoError> {
    let data = fs::read(path)?;
    let mut cur = Cursor { data: &data, pos: 0 };
    if cur.take(4)? != MODEL_MAGIC {
        return Err(ModelIoError::Format("bad magic".into()));
    }
    let version = cur.u32()?;
    if version != MODEL_VERSION {
        return Err(ModelIoError::Format(format!("unsupported version {version}")));
    }
    let hash_bits = cur.u32()?;
    if !(1..=30).contains(&hash_bits) {
        return Err(ModelIoError::Format(format!("implausible hash width {hash_bits}")));
    }
    let n_labels = cur.u32()?;
    let mut labels = Vec::with_capacity(n_labels as usize);
    for _ in 0..n_labels {
        let len = cur.u32()? as usize;
        let bytes = cur.take(len)?;
        labels.push(
            String::from_utf8(bytes.to_vec())
                .map_err(|_| ModelIoError::Format("label is not UTF-8".into()))?,
        );
    }
    let count = cur.u64()?;
    if count != 1u64 << hash_bits {
        return Err(ModelIoError::Format(format!(
            "weight count {count} does not match hash width {hash_bits}"
        )));
    }
    let mut weights = Vec::with_capacity(count as usize);
    for _ in 0..count {
        weights.push(f64::from_le_bytes(cur.take(8)?.try_into().unwrap()));
    }
    if cur.pos != data.len() {
        return Err(ModelIoError::Format("trailing bytes after weights".into()));
    }
    Ok(SavedModel { w: ModelVector::from_dense(weights), labels })
}
