//! Seeded, platform-independent random streams.
//!
//! The generator is xoshiro256++ seeded through SplitMix64. Uniform draws
//! take the top 53 bits of each output word; Gaussian draws use the
//! Box–Muller transform with both variates consumed in order. The
//! transcendental functions come from `libm` so the stream does not depend
//! on the host math library.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};
use crate::tensor::{DType, Tensor};

#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: Xoshiro256PlusPlus,
    spare_normal: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    /// Independent stream for item `index` of a batch drawn under `base`.
    pub fn derived(base: u64, index: u64) -> Self {
        Self::new(splitmix64(base ^ splitmix64(index.wrapping_add(1))))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[lo, hi]` (inclusive), by rejection.
    pub fn int_inclusive(&mut self, lo: u64, hi: u64) -> u64 {
        assert!(lo <= hi, "empty integer range");
        let span = hi - lo;
        if span == u64::MAX {
            return self.next_u64();
        }
        let n = span + 1;
        let zone = u64::MAX - (u64::MAX % n) - 1;
        loop {
            let v = self.next_u64();
            if v <= zone {
                return lo + v % n;
            }
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // 1 - U lies in (0, 1], keeping the logarithm finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * libm::sin(theta));
        r * libm::cos(theta)
    }

    pub fn gaussian(&mut self, mu: f64, sigma: f64) -> f64 {
        mu + sigma * self.standard_normal()
    }

    /// Fisher–Yates permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.int_inclusive(0, i as u64) as usize;
            idx.swap(i, j);
        }
        idx
    }
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// I.i.d. `N(mu, sigma^2)` draws in row-major order.
pub fn gaussian_tensor(
    rng: &mut SeededRng,
    shape: &[usize],
    mu: f64,
    sigma: f64,
    dtype: DType,
) -> Result<Tensor> {
    if !(sigma >= 0.0) {
        return Err(Error::arg(format!("sigma must be >= 0, got {sigma}")));
    }
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gaussian(mu, sigma)).collect();
    Tensor::new(shape.to_vec(), data, dtype)
}

pub fn uniform_tensor(
    rng: &mut SeededRng,
    shape: &[usize],
    lo: f64,
    hi: f64,
    dtype: DType,
) -> Result<Tensor> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.uniform_range(lo, hi)).collect();
    Tensor::new(shape.to_vec(), data, dtype)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let a = gaussian_tensor(&mut SeededRng::new(7), &[4, 5], 0.0, 1.0, DType::F64).unwrap();
        let b = gaussian_tensor(&mut SeededRng::new(7), &[4, 5], 0.0, 1.0, DType::F64).unwrap();
        assert_eq!(a, b);
        let c = gaussian_tensor(&mut SeededRng::new(8), &[4, 5], 0.0, 1.0, DType::F64).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_sigma_is_constant() {
        let t = gaussian_tensor(&mut SeededRng::new(1), &[3, 3], 2.5, 0.0, DType::F32).unwrap();
        assert!(t.data().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn negative_sigma_rejected() {
        let err = gaussian_tensor(&mut SeededRng::new(1), &[2], 0.0, -1.0, DType::F64);
        assert!(matches!(err, Err(Error::Argument(_))));
        let nan = gaussian_tensor(&mut SeededRng::new(1), &[2], 0.0, f64::NAN, DType::F64);
        assert!(nan.is_err());
    }

    #[test]
    fn gaussian_moments() {
        // For n = 1e5 standard normals the standard error of the mean is
        // 1/sqrt(n) = 0.0032 and of the variance sqrt(2/n) = 0.0045; the
        // bounds below sit at > 6 standard errors.
        let n = 100_000;
        let t = gaussian_tensor(&mut SeededRng::new(2024), &[n], 0.0, 1.0, DType::F64).unwrap();
        let mean = t.data().iter().sum::<f64>() / n as f64;
        let var = t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.03, "var {var}");
    }

    #[test]
    fn pinned_stream_prefix() {
        // Frozen outputs: any change to the generator or the uniform
        // mapping changes every downstream file.
        let mut rng = SeededRng::new(0);
        let first: Vec<u64> = (0..3).map(|_| rng.next_u64()).collect();
        let mut again = SeededRng::new(0);
        assert_eq!(first, (0..3).map(|_| again.next_u64()).collect::<Vec<_>>());
        assert_eq!(first, PINNED_SEED0);
    }

    // Cross-checked against an independent splitmix64 + xoshiro256++ script.
    const PINNED_SEED0: [u64; 3] = [5987356902031041503, 7051070477665621255, 6633766593972829180];

    #[test]
    fn int_inclusive_stays_in_range() {
        let mut rng = SeededRng::new(3);
        let mut seen = [false; 5];
        for _ in 0..1000 {
            let v = rng.int_inclusive(1, 5);
            assert!((1..=5).contains(&v));
            seen[(v - 1) as usize] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn permutation_is_a_permutation() {
        let mut p = SeededRng::new(5).permutation(50);
        p.sort_unstable();
        assert_eq!(p, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn derived_streams_differ_by_index() {
        let a = SeededRng::derived(99, 0).next_u64();
        let b = SeededRng::derived(99, 1).next_u64();
        assert_ne!(a, b);
    }
}
