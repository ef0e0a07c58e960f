//! On-disk ground truth, keyed by the digests of the sets it was computed from.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::knn::{exact_knn, exact_knn_self, GroundTruth, NeighborList};
use crate::scalar::Scalar;
use crate::vectors::VectorSet;

const GT_MAGIC: &[u8; 8] = b"ANNGT\0\0\x01";

pub fn write_ground_truth(path: impl AsRef<Path>, gt: &GroundTruth) -> Result<()> {
    let mut out = Vec::with_capacity(16 + gt.rows.len() * gt.k * 12);
    out.extend_from_slice(GT_MAGIC);
    out.extend_from_slice(&(gt.k as u32).to_le_bytes());
    out.extend_from_slice(&(gt.rows.len() as u32).to_le_bytes());
    for r in &gt.rows {
        if r.len() != gt.k {
            return Err(Error::usage("ground-truth rows must all have length k"));
        }
        for &j in &r.indices {
            out.extend_from_slice(&j.to_le_bytes());
        }
        for &d in &r.dissimilarities {
            out.extend_from_slice(&d.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    // write-then-rename so readers never see a partial file
    let path = path.as_ref();
    let tmp = path.with_extension("tmp");
    fs::File::create(&tmp)?.write_all(&out)?;
    fs::rename(tmp, path)?;
    Ok(())
}

pub fn read_ground_truth(path: impl AsRef<Path>) -> Result<GroundTruth> {
    let bytes = fs::read(path)?;
    if bytes.len() < 20 || &bytes[..8] != GT_MAGIC {
        return Err(Error::format("not a ground-truth file"));
    }
    let (body, crc) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(crc.try_into().unwrap()) {
        return Err(Error::format("ground-truth checksum mismatch"));
    }
    let k = u32::from_le_bytes(body[8..12].try_into().unwrap()) as usize;
    let n = u32::from_le_bytes(body[12..16].try_into().unwrap()) as usize;
    if body.len() != 16 + n * k * 12 {
        return Err(Error::format("ground-truth length does not match header"));
    }
    let rows = body[16..]
        .chunks_exact(k * 12)
        .map(|rec| {
            let (idx, dis) = rec.split_at(k * 4);
            NeighborList {
                indices: idx.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect(),
                dissimilarities: dis.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
            }
        })
        .collect();
    Ok(GroundTruth { k, rows })
}

/// Directory of ground-truth files keyed by (corpus digest, training
/// digest, k).
#[derive(Clone, Debug)]
pub struct GroundTruthCache {
    dir: PathBuf,
}

impl GroundTruthCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    /// `training = None` labels the corpus itself, each point first.
    pub fn path_for<T: Scalar>(&self, corpus: &VectorSet<T>, training: Option<&VectorSet<T>>, k: usize) -> PathBuf {
        let mut h = Sha256::new();
        h.update(corpus.digest());
        match training {
            Some(t) => h.update(t.digest()),
            None => h.update(b"self"),
        }
        h.update((k as u64).to_le_bytes());
        let key: [u8; 32] = h.finalize().into();
        let hex: String = key[..12].iter().map(|b| format!("{b:02x}")).collect();
        self.dir.join(format!("gt-{hex}.bin"))
    }

    pub fn get_or_compute<T: Scalar>(
        &self,
        corpus: &VectorSet<T>,
        training: Option<&VectorSet<T>>,
        k: usize,
    ) -> Result<GroundTruth> {
        let path = self.path_for(corpus, training, k);
        if path.exists() {
            match read_ground_truth(&path) {
                Ok(gt) if gt.k == k && gt.len() == training.map_or(corpus.len(), |t| t.len()) => return Ok(gt),
                Ok(_) => log::warn!("ground-truth cache entry {} has the wrong shape; recomputing", path.display()),
                Err(e) => log::warn!("ignoring unreadable cache entry {}: {e}", path.display()),
            }
        }
        let gt = match training {
            Some(t) => exact_knn(corpus, t, k)?,
            None => exact_knn_self(corpus, k)?,
        };
        write_ground_truth(&path, &gt)?;
        Ok(gt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::SyntheticRecipe;

    #[test]
    fn cache_hit_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cache = GroundTruthCache::new(dir.path()).unwrap();
        let corpus = SyntheticRecipe::gaussian(1.0, 200, 5, 1).generate::<f32>().unwrap();
        let queries = SyntheticRecipe::gaussian(1.0, 30, 5, 2).generate::<f32>().unwrap();
        let a = cache.get_or_compute(&corpus, Some(&queries), 4).unwrap();
        assert!(cache.path_for(&corpus, Some(&queries), 4).exists());
        let b = cache.get_or_compute(&corpus, Some(&queries), 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, exact_knn(&corpus, &queries, 4).unwrap());
        assert_ne!(cache.path_for(&corpus, Some(&queries), 4), cache.path_for(&corpus, None, 4));
        assert_ne!(cache.path_for(&corpus, None, 4), cache.path_for(&corpus, None, 5));
        let s = cache.get_or_compute(&corpus, None, 3).unwrap();
        assert_eq!(s.len(), 200);
        assert_eq!(s.rows[7].indices[0], 7);
    }

    #[test]
    fn corrupted_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = SyntheticRecipe::gaussian(1.0, 20, 2, 1).generate::<f32>().unwrap();
        let gt = exact_knn_self(&corpus, 2).unwrap();
        let p = dir.path().join("g.bin");
        write_ground_truth(&p, &gt).unwrap();
        let mut bytes = fs::read(&p).unwrap();
        bytes[20] ^= 1;
        fs::write(&p, bytes).unwrap();
        assert!(matches!(read_ground_truth(&p), Err(Error::Format(_))));
    }
}
