//! Versioned binary checkpoints: 4-byte magic, format version, JSON header
//! (architecture hash, shapes, seed, step), then little-endian f64 blobs in
//! header order. Loading refuses mismatched architecture hashes.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::tape::{Mat, NnError};
use crate::util::{read_f64_le, read_u32_le, read_u64_le, write_f64_le, write_u32_le, write_u64_le};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"BCPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    arch_hash: String,
    seed: u64,
    step: u64,
    shapes: Vec<(String, usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub arch_hash: String,
    pub seed: u64,
    pub step: u64,
    pub tensors: Vec<(String, Mat)>,
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), NnError> {
        w.write_all(&CHECKPOINT_MAGIC)?;
        write_u32_le(w, CHECKPOINT_VERSION)?;
        let header = CheckpointHeader {
            arch_hash: self.arch_hash.clone(),
            seed: self.seed,
            step: self.step,
            shapes: self
                .tensors
                .iter()
                .map(|(n, m)| (n.clone(), m.nrows(), m.ncols()))
                .collect(),
        };
        let header_bytes =
            serde_json::to_vec(&header).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        write_u64_le(w, header_bytes.len() as u64)?;
        w.write_all(&header_bytes)?;
        for (_, m) in &self.tensors {
            for &v in m.iter() {
                write_f64_le(w, v)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Checkpoint, NnError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(NnError::Checkpoint("bad magic".to_string()));
        }
        let version = read_u32_le(r)?;
        if version != CHECKPOINT_VERSION {
            return Err(NnError::Checkpoint(format!(
                "unsupported version {version}"
            )));
        }
        let header_len = read_u64_le(r)? as usize;
        let mut header_bytes = vec![0u8; header_len];
        r.read_exact(&mut header_bytes)?;
        let header: CheckpointHeader = serde_json::from_slice(&header_bytes)
            .map_err(|e| NnError::Checkpoint(e.to_string()))?;
        let mut tensors = Vec::with_capacity(header.shapes.len());
        for (name, rows, cols) in header.shapes {
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                data.push(read_f64_le(r)?);
            }
            let m = Mat::from_shape_vec((rows, cols), data)
                .map_err(|e| NnError::Checkpoint(e.to_string()))?;
            tensors.push((name, m));
        }
        Ok(Checkpoint {
            arch_hash: header.arch_hash,
            seed: header.seed,
            step: header.step,
            tensors,
        })
    }

    /// Loads and verifies the architecture hash in one step.
    pub fn read_expecting<R: Read>(r: &mut R, arch_hash: &str) -> Result<Checkpoint, NnError> {
        let ckpt = Self::read_from(r)?;
        if ckpt.arch_hash != arch_hash {
            return Err(NnError::Checkpoint(format!(
                "architecture hash mismatch: checkpoint {}, expected {}",
                ckpt.arch_hash, arch_hash
            )));
        }
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            arch_hash: "abc123".to_string(),
            seed: 42,
            step: 7,
            tensors: vec![
                ("w".to_string(), Mat::from_shape_fn((2, 3), |(r, c)| (r * 3 + c) as f64 / 7.0)),
                ("b".to_string(), Mat::from_elem((1, 3), -0.25)),
            ],
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ckpt = sample();
        let mut buf = Vec::new();
        ckpt.write_to(&mut buf).unwrap();
        let back = Checkpoint::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(ckpt, back);
        let mut buf2 = Vec::new();
        back.write_to(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn rejects_wrong_arch_hash() {
        let ckpt = sample();
        let mut buf = Vec::new();
        ckpt.write_to(&mut buf).unwrap();
        assert!(Checkpoint::read_expecting(&mut buf.as_slice(), "abc123").is_ok());
        let err = Checkpoint::read_expecting(&mut buf.as_slice(), "other").unwrap_err();
        assert!(matches!(err, NnError::Checkpoint(_)));
    }

    #[test]
    fn rejects_corrupt_magic() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        buf[0] = b'X';
        assert!(Checkpoint::read_from(&mut buf.as_slice()).is_err());
    }
}
