use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use super::synthetic::SyntheticRecipe;
use super::vecs::{read_bvecs, read_fvecs, read_raw_f32};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vectors::VectorSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VecFormat {
    Fvecs,
    Bvecs,
    /// Bare little-endian `f32` rows of the given dimension.
    RawF32 { d: usize },
}

/// Where a vector set comes from.
///
/// Textual form, as accepted by `FromStr`:
///
/// ```text
/// fvecs:PATH
/// bvecs:PATH
/// raw:D:PATH
/// uniform:LO:HI:N:D:SEED
/// gaussian:SIGMA:N:D:SEED
/// powerlaw:EXPONENT:N:D:SEED
/// ```
#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSpec {
    File { path: PathBuf, format: VecFormat },
    Synthetic(SyntheticRecipe),
}

pub fn read_vectors<T: Scalar>(spec: &DatasetSpec) -> Result<VectorSet<T>> {
    match spec {
        DatasetSpec::File { path, format } => {
            let set = match *format {
                VecFormat::Fvecs => read_fvecs(path)?,
                VecFormat::Bvecs => read_bvecs(path)?,
                VecFormat::RawF32 { d } => read_raw_f32(path, d)?,
            };
            set.cast()
        }
        DatasetSpec::Synthetic(recipe) => recipe.generate(),
    }
}

fn num<N: FromStr>(s: &str, what: &str) -> Result<N> {
    s.parse()
        .map_err(|_| Error::usage(format!("cannot parse {what} from {s:?}")))
}

impl FromStr for DatasetSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::usage(format!("dataset spec {s:?} needs a kind prefix")))?;
        let file = |format| DatasetSpec::File {
            path: PathBuf::from(rest),
            format,
        };
        let spec = match kind {
            "fvecs" => file(VecFormat::Fvecs),
            "bvecs" => file(VecFormat::Bvecs),
            "raw" => {
                let (d, path) = rest
                    .split_once(':')
                    .ok_or_else(|| Error::usage("raw spec is raw:D:PATH"))?;
                DatasetSpec::File {
                    path: PathBuf::from(path),
                    format: VecFormat::RawF32 { d: num(d, "dimension")? },
                }
            }
            "uniform" | "gaussian" | "powerlaw" => {
                let f: Vec<&str> = rest.split(':').collect();
                let recipe = match (kind, f.as_slice()) {
                    ("uniform", [lo, hi, n, d, seed]) => SyntheticRecipe::uniform(
                        num(lo, "lo")?,
                        num(hi, "hi")?,
                        num(n, "n")?,
                        num(d, "d")?,
                        num(seed, "seed")?,
                    ),
                    ("gaussian", [sigma, n, d, seed]) => SyntheticRecipe::gaussian(
                        num(sigma, "sigma")?,
                        num(n, "n")?,
                        num(d, "d")?,
                        num(seed, "seed")?,
                    ),
                    ("powerlaw", [exponent, n, d, seed]) => SyntheticRecipe::power_law(
                        num(exponent, "exponent")?,
                        num(n, "n")?,
                        num(d, "d")?,
                        num(seed, "seed")?,
                    ),
                    _ => {
                        return Err(Error::usage(format!(
                            "malformed {kind} spec {s:?}; expected uniform:LO:HI:N:D:SEED, \
                             gaussian:SIGMA:N:D:SEED or powerlaw:EXPONENT:N:D:SEED"
                        )))
                    }
                };
                recipe.validate()?;
                DatasetSpec::Synthetic(recipe)
            }
            other => return Err(Error::usage(format!("unknown dataset kind {other:?}"))),
        };
        Ok(spec)
    }
}

impl fmt::Display for DatasetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetSpec::File { path, format } => match format {
                VecFormat::Fvecs => write!(f, "fvecs:{}", path.display()),
                VecFormat::Bvecs => write!(f, "bvecs:{}", path.display()),
                VecFormat::RawF32 { d } => write!(f, "raw:{d}:{}", path.display()),
            },
            DatasetSpec::Synthetic(SyntheticRecipe::Uniform { lo, hi, n, d, seed }) => {
                write!(f, "uniform:{lo}:{hi}:{n}:{d}:{seed}")
            }
            DatasetSpec::Synthetic(SyntheticRecipe::Gaussian { sigma, n, d, seed }) => {
                write!(f, "gaussian:{sigma}:{n}:{d}:{seed}")
            }
            DatasetSpec::Synthetic(SyntheticRecipe::PowerLaw { exponent, n, d, seed }) => {
                write!(f, "powerlaw:{exponent}:{n}:{d}:{seed}")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        for s in [
            "fvecs:/data/sift_base.fvecs",
            "bvecs:a.bvecs",
            "raw:128:x.bin",
            "uniform:-10:10:1000:50:3",
            "gaussian:2.5:100:50:7",
            "powerlaw:0.5:100:50:7",
        ] {
            let spec: DatasetSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        for bad in ["sift", "uniform:1:1:5:5:0", "gaussian:1:5:5", "hdf5:x", "raw:x.bin"] {
            assert!(bad.parse::<DatasetSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn synthetic_spec_reads() {
        let spec: DatasetSpec = "gaussian:1:20:3:1".parse().unwrap();
        let vs = read_vectors::<f64>(&spec).unwrap();
        assert_eq!((vs.len(), vs.dim()), (20, 3));
    }
}
