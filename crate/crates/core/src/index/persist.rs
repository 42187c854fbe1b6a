//! PGIX index files.
//!
//! Layout, little-endian: magic `PGIX`, version byte, `dim: u32`,
//! `n: u64`, `dim` weights, `dim` means, `dim` stds, then `n` records of
//! (`u32` byte length, UTF-8 id, `dim` z-scored values), all values `f64`.

use std::io::{Read, Write};

use super::{IndexError, NormalizationStats, Result, SimilarityIndex, Weights};

pub const INDEX_MAGIC: &[u8; 4] = b"PGIX";
pub const INDEX_FORMAT_VERSION: u8 = 1;

fn corrupt(e: impl std::fmt::Display) -> IndexError {
    IndexError::Corrupt(e.to_string())
}

impl SimilarityIndex {
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(INDEX_MAGIC)?;
        w.write_all(&[INDEX_FORMAT_VERSION])?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for v in self
            .weights
            .as_slice()
            .iter()
            .chain(&self.stats.mean)
            .chain(&self.stats.std)
        {
            w.write_all(&v.to_le_bytes())?;
        }
        for (i, id) in self.ids.iter().enumerate() {
            w.write_all(&(id.len() as u32).to_le_bytes())?;
            w.write_all(id.as_bytes())?;
            for v in self.row(i) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        buf
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| IndexError::BadMagic)?;
        if &magic != INDEX_MAGIC {
            return Err(IndexError::BadMagic);
        }
        let mut version = [0u8; 1];
        r.read_exact(&mut version).map_err(corrupt)?;
        if version[0] != INDEX_FORMAT_VERSION {
            return Err(IndexError::BadVersion(version[0]));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4).map_err(corrupt)?;
        let dim = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b8).map_err(corrupt)?;
        let n = u64::from_le_bytes(b8) as usize;
        let mut read_f64s = |count: usize| -> Result<Vec<f64>> {
            (0..count)
                .map(|_| {
                    r.read_exact(&mut b8).map_err(corrupt)?;
                    Ok(f64::from_le_bytes(b8))
                })
                .collect()
        };
        let weights = read_f64s(dim)?;
        let mean = read_f64s(dim)?;
        let std = read_f64s(dim)?;
        if weights.iter().any(|w| !(*w > 0.0)) || std.iter().any(|s| !(*s > 0.0)) {
            return Err(corrupt("non-positive weight or scale"));
        }
        let mut ids = Vec::with_capacity(n.min(1 << 20));
        let mut data = Vec::with_capacity((n * dim).min(1 << 24));
        for _ in 0..n {
            r.read_exact(&mut b4).map_err(corrupt)?;
            let len = u32::from_le_bytes(b4) as usize;
            let mut id = vec![0u8; len];
            r.read_exact(&mut id).map_err(corrupt)?;
            ids.push(String::from_utf8(id).map_err(corrupt)?);
            for _ in 0..dim {
                r.read_exact(&mut b8).map_err(corrupt)?;
                data.push(f64::from_le_bytes(b8));
            }
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing).map_err(corrupt)? != 0 {
            return Err(corrupt("trailing bytes"));
        }
        Ok(SimilarityIndex::from_parts(
            dim,
            ids,
            data,
            Weights(weights),
            NormalizationStats { mean, std },
        ))
    }

    pub fn save(&self, path: &std::path::Path) -> std::io::Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(corrupt)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureVector;

    fn sample() -> SimilarityIndex {
        let vs: Vec<FeatureVector> = (0..4)
            .map(|i| FeatureVector::new(format!("patch-{i}é"), "w", "p", vec![i as f64, 1.0, -(i as f64) * 2.5]))
            .collect();
        SimilarityIndex::build(&vs).unwrap()
    }

    #[test]
    fn round_trip() {
        let idx = sample();
        let bytes = idx.to_bytes();
        assert_eq!(&bytes[..5], b"PGIX\x01");
        assert_eq!(SimilarityIndex::read_from(bytes.as_slice()).unwrap(), idx);
    }

    #[test]
    fn rejects_bad_header() {
        let mut bytes = sample().to_bytes();
        bytes[0] = b'X';
        assert_eq!(SimilarityIndex::read_from(bytes.as_slice()), Err(IndexError::BadMagic));
        let mut bytes = sample().to_bytes();
        bytes[4] = 2;
        assert_eq!(SimilarityIndex::read_from(bytes.as_slice()), Err(IndexError::BadVersion(2)));
        let bytes = sample().to_bytes();
        assert!(matches!(
            SimilarityIndex::read_from(&bytes[..bytes.len() - 3]),
            Err(IndexError::Corrupt(_))
        ));
    }
}
