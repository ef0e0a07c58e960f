use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major set of `n` points in `d` dimensions.
///
/// Always non-empty and finite; constructors reject anything else.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorSet<T> {
    n: usize,
    d: usize,
    data: Vec<T>,
}

impl<T: Scalar> VectorSet<T> {
    pub fn new(d: usize, data: Vec<T>) -> Result<Self> {
        if d == 0 {
            return Err(Error::usage("dimension must be at least 1"));
        }
        if data.is_empty() {
            return Err(Error::usage("vector set must hold at least one point"));
        }
        if !data.len().is_multiple_of(d) {
            return Err(Error::usage(format!(
                "data length {} is not a multiple of dimension {d}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::usage(format!(
                "non-finite value in row {} column {}",
                pos / d,
                pos % d
            )));
        }
        Ok(Self {
            n: data.len() / d,
            d,
            data,
        })
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let d = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * d);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::usage(format!(
                    "row {i} has dimension {}, expected {d}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(d, data)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    /// Never true for a constructed set; provided for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.data.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// New set holding the given rows in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self::new(self.d, data)
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.d != other.d {
            return Err(Error::usage(format!(
                "cannot concatenate dimension {} with {}",
                self.d, other.d
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Self::new(self.d, data)
    }

    pub fn cast<U: Scalar>(&self) -> Result<VectorSet<U>> {
        VectorSet::new(
            self.d,
            self.data
                .iter()
                .map(|&v| U::from_f64_lossy(v.as_f64()))
                .collect(),
        )
    }

    /// SHA-256 over the shape and the little-endian bytes of every value.
    pub fn digest(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update([T::TAG]);
        hasher.update((self.n as u64).to_le_bytes());
        hasher.update((self.d as u64).to_le_bytes());
        let mut buf = Vec::with_capacity(T::BYTES * 1024);
        for chunk in self.data.chunks(1024) {
            buf.clear();
            for &v in chunk {
                v.write_le(&mut buf);
            }
            hasher.update(&buf);
        }
        hasher.finalize().into()
    }

    pub(crate) fn check_dim(&self, d: usize, what: &str) -> Result<()> {
        if self.d != d {
            return Err(Error::usage(format!(
                "{what} has dimension {}, expected {d}",
                self.d
            )));
        }
        Ok(())
    }
}
