use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vectors::VectorSet;

/// Seeded i.i.d. point clouds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SyntheticRecipe {
    /// Every coordinate uniform on `(lo, hi)`.
    Uniform { lo: f64, hi: f64, n: usize, d: usize, seed: u64 },
    /// Every coordinate `N(0, sigma^2)`.
    Gaussian { sigma: f64, n: usize, d: usize, seed: u64 },
    /// Coordinate `i` (from zero) is `N(0, (i + 1)^(-2 exponent))`: a
    /// decaying variance spectrum with low intrinsic dimension.
    PowerLaw { exponent: f64, n: usize, d: usize, seed: u64 },
}

impl SyntheticRecipe {
    pub fn uniform(lo: f64, hi: f64, n: usize, d: usize, seed: u64) -> Self {
        SyntheticRecipe::Uniform { lo, hi, n, d, seed }
    }

    pub fn gaussian(sigma: f64, n: usize, d: usize, seed: u64) -> Self {
        SyntheticRecipe::Gaussian { sigma, n, d, seed }
    }

    pub fn power_law(exponent: f64, n: usize, d: usize, seed: u64) -> Self {
        SyntheticRecipe::PowerLaw { exponent, n, d, seed }
    }

    pub fn validate(&self) -> Result<()> {
        let (n, d) = match *self {
            SyntheticRecipe::Uniform { lo, hi, n, d, .. } => {
                if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                    return Err(Error::usage(format!("uniform bounds need lo < hi, got ({lo}, {hi})")));
                }
                (n, d)
            }
            SyntheticRecipe::Gaussian { sigma, n, d, .. } => {
                if !sigma.is_finite() || sigma <= 0.0 {
                    return Err(Error::usage(format!("gaussian sigma must be positive, got {sigma}")));
                }
                (n, d)
            }
            SyntheticRecipe::PowerLaw { exponent, n, d, .. } => {
                if !exponent.is_finite() || exponent < 0.0 {
                    return Err(Error::usage(format!("power-law exponent must be non-negative, got {exponent}")));
                }
                (n, d)
            }
        };
        if n == 0 || d == 0 {
            return Err(Error::usage("synthetic sets need n >= 1 and d >= 1"));
        }
        Ok(())
    }

    pub fn generate<T: Scalar>(&self) -> Result<VectorSet<T>> {
        self.validate()?;
        let data: Vec<T> = match *self {
            SyntheticRecipe::Uniform { lo, hi, n, d, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let dist = Uniform::new(lo, hi).expect("validated bounds");
                (0..n * d)
                    .map(|_| {
                        // open interval: redraw the lower endpoint
                        loop {
                            let v = T::from_f64_lossy(dist.sample(&mut rng));
                            if v.as_f64() > lo && v.as_f64() < hi {
                                break v;
                            }
                        }
                    })
                    .collect()
            }
            SyntheticRecipe::Gaussian { sigma, n, d, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let dist = Normal::new(0.0, sigma).expect("validated sigma");
                (0..n * d).map(|_| T::from_f64_lossy(dist.sample(&mut rng))).collect()
            }
            SyntheticRecipe::PowerLaw { exponent, n, d, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let sd: Vec<f64> = (0..d).map(|i| ((i + 1) as f64).powf(-exponent)).collect();
                (0..n * d)
                    .map(|c| {
                        let z: f64 = rng.sample(rand_distr::StandardNormal);
                        T::from_f64_lossy(z * sd[c % d])
                    })
                    .collect()
            }
        };
        VectorSet::new(self.dim(), data)
    }

    pub fn n(&self) -> usize {
        match *self {
            SyntheticRecipe::Uniform { n, .. }
            | SyntheticRecipe::Gaussian { n, .. }
            | SyntheticRecipe::PowerLaw { n, .. } => n,
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            SyntheticRecipe::Uniform { d, .. }
            | SyntheticRecipe::Gaussian { d, .. }
            | SyntheticRecipe::PowerLaw { d, .. } => d,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        match self {
            SyntheticRecipe::Uniform { lo, hi, n, d, .. } => SyntheticRecipe::Uniform { lo, hi, n, d, seed },
            SyntheticRecipe::Gaussian { sigma, n, d, .. } => SyntheticRecipe::Gaussian { sigma, n, d, seed },
            SyntheticRecipe::PowerLaw { exponent, n, d, .. } => SyntheticRecipe::PowerLaw { exponent, n, d, seed },
        }
    }

    pub fn with_n(self, n: usize) -> Self {
        match self {
            SyntheticRecipe::Uniform { lo, hi, d, seed, .. } => SyntheticRecipe::Uniform { lo, hi, n, d, seed },
            SyntheticRecipe::Gaussian { sigma, d, seed, .. } => SyntheticRecipe::Gaussian { sigma, n, d, seed },
            SyntheticRecipe::PowerLaw { exponent, d, seed, .. } => SyntheticRecipe::PowerLaw { exponent, n, d, seed },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_sd(vs: &VectorSet<f32>) -> (f64, f64) {
        let n = vs.as_slice().len() as f64;
        let mean = vs.as_slice().iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = vs.as_slice().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var.sqrt())
    }

    #[test]
    fn uniform_moments_and_range() {
        let vs = SyntheticRecipe::uniform(-10.0, 10.0, 2000, 500, 1).generate::<f32>().unwrap();
        let (mean, _) = mean_sd(&vs);
        assert!(mean.abs() < 0.1, "{mean}");
        assert!(vs.as_slice().iter().all(|&v| v > -10.0 && v < 10.0));
    }

    #[test]
    fn gaussian_sd() {
        let vs = SyntheticRecipe::gaussian(2.5, 2000, 500, 2).generate::<f32>().unwrap();
        let (_, sd) = mean_sd(&vs);
        assert!((sd - 2.5).abs() < 0.025, "{sd}");
    }

    #[test]
    fn power_law_spectrum() {
        let vs = SyntheticRecipe::power_law(1.0, 20_000, 4, 3).generate::<f64>().unwrap();
        for i in 0..4 {
            let var = vs.rows().map(|r| r[i] * r[i]).sum::<f64>() / vs.len() as f64;
            let want = 1.0 / ((i + 1) * (i + 1)) as f64;
            assert!((var / want - 1.0).abs() < 0.05, "coordinate {i}: {var} vs {want}");
        }
    }

    #[test]
    fn seeded() {
        let r = SyntheticRecipe::gaussian(1.0, 50, 4, 9);
        assert_eq!(r.generate::<f32>().unwrap(), r.generate::<f32>().unwrap());
        assert_ne!(r.generate::<f32>().unwrap(), r.with_seed(10).generate::<f32>().unwrap());
    }

    #[test]
    fn invalid_recipes() {
        assert!(SyntheticRecipe::uniform(1.0, 1.0, 5, 2, 0).validate().is_err());
        assert!(SyntheticRecipe::gaussian(0.0, 5, 2, 0).validate().is_err());
        assert!(SyntheticRecipe::gaussian(1.0, 0, 2, 0).validate().is_err());
        assert!(SyntheticRecipe::power_law(-1.0, 5, 2, 0).validate().is_err());
    }
}
