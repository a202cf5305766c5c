//! Binary parameter snapshots: a magic tag, a JSON header, then one record
//! per parameter holding its name, shape, and little-endian f64 values.

use super::matrix::Matrix;
use super::params::ParamSet;
use super::DiffError;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"PJCKPT01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config_hash: String,
    pub seed: u64,
    pub code_version: String,
    #[serde(default)]
    pub note: String,
}

fn corrupt(msg: impl Into<String>) -> DiffError {
    DiffError::Checkpoint(msg.into())
}

pub fn encode_checkpoint(header: &CheckpointHeader, params: &ParamSet) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let json = serde_json::to_vec(header).expect("header serializes");
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, p) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(p.value.rows as u32).to_le_bytes());
        out.extend_from_slice(&(p.value.cols as u32).to_le_bytes());
        for x in &p.value.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DiffError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| corrupt("truncated checkpoint"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, DiffError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(CheckpointHeader, ParamSet), DiffError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let hlen = r.u32()?;
    let header: CheckpointHeader =
        serde_json::from_slice(r.take(hlen)?).map_err(|e| corrupt(format!("header: {e}")))?;
    let count = r.u32()?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let nlen = r.u32()?;
        let name = std::str::from_utf8(r.take(nlen)?)
            .map_err(|_| corrupt("parameter name is not utf-8"))?
            .to_string();
        let rows = r.u32()?;
        let cols = r.u32()?;
        let raw = r.take(rows * cols * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        params.insert(name, Matrix::from_vec(rows, cols, data));
    }
    if r.pos != bytes.len() {
        return Err(corrupt("trailing bytes"));
    }
    Ok((header, params))
}

pub fn save_checkpoint(path: &Path, header: &CheckpointHeader, params: &ParamSet) -> Result<(), DiffError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_checkpoint(header, params))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointHeader, ParamSet), DiffError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_checkpoint(&bytes)
}

/// Load values into `into`; every stored name must exist with the same shape.
pub fn restore_into(into: &mut ParamSet, stored: &ParamSet) -> Result<(), DiffError> {
    for (name, p) in stored.iter() {
        let Some(dst) = into.get_mut(name) else {
            return Err(DiffError::NameSetMismatch(format!("unexpected parameter {name}")));
        };
        if dst.value.shape() != p.value.shape() {
            return Err(DiffError::ParameterShape {
                name: name.to_string(),
                expected: dst.value.shape(),
                found: p.value.shape(),
            });
        }
        dst.value = p.value.clone();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> CheckpointHeader {
        CheckpointHeader {
            config_hash: "abc".into(),
            seed: 4,
            code_version: "0.1.0".into(),
            note: String::new(),
        }
    }

    #[test]
    fn round_trip() {
        let mut p = ParamSet::new();
        p.insert("a.W", Matrix::from_rows(&[vec![1.5, -0.25], vec![1e-300, 3.0]]));
        p.insert("a.b", Matrix::zeros(1, 2));
        let bytes = encode_checkpoint(&header(), &p);
        let (h, q) = decode_checkpoint(&bytes).unwrap();
        assert_eq!(h, header());
        assert_eq!(p, q);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut stored = ParamSet::new();
        stored.insert("w", Matrix::zeros(2, 2));
        let mut live = ParamSet::new();
        live.insert("w", Matrix::zeros(2, 3));
        assert!(matches!(
            restore_into(&mut live, &stored),
            Err(DiffError::ParameterShape { .. })
        ));
    }

    #[test]
    fn truncation_rejected() {
        let mut p = ParamSet::new();
        p.insert("w", Matrix::zeros(2, 2));
        let bytes = encode_checkpoint(&header(), &p);
        assert!(decode_checkpoint(&bytes[..bytes.len() - 3]).is_err());
    }
}
