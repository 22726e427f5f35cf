//! Finite-dimensional truncation of the classical Wiener space.
//!
//! Points are stored in coordinates with respect to the orthonormal
//! Cameron–Martin basis `{√λ_k e_k}`, where `e_k(ξ) = √2 sin(ξ/√λ_k)` and
//! `λ_k = 4/(π²(2k−1)²)`. In these coordinates the Wiener measure becomes the
//! standard Gaussian on ℝⁿ, the H-inner product is the Euclidean one and the
//! coordinate functional `ê_k` is simply `x ↦ x_k`.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Eigenvalue `λ_k` of the Brownian covariance operator (1-based `k`).
pub fn kl_eigenvalue(k: usize) -> f64 {
    let m = (2 * k - 1) as f64;
    4.0 / (PI * PI * m * m)
}

/// Truncation of the Wiener/Cameron–Martin pair to `n` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedModel {
    n: usize,
    eigenvalues: Vec<f64>,
    seed: u64,
}

impl TruncatedModel {
    pub fn new(n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("truncation dimension n must be ≥ 1".into()));
        }
        let eigenvalues = (1..=n).map(kl_eigenvalue).collect();
        Ok(Self { n, eigenvalues, seed })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    fn check_index(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.n {
            return Err(Error::IndexOutOfRange { index: k, len: self.n });
        }
        Ok(())
    }

    /// `λ_k` for `1 ≤ k ≤ n`.
    pub fn eigenvalue(&self, k: usize) -> Result<f64> {
        self.check_index(k)?;
        Ok(self.eigenvalues[k - 1])
    }

    /// `e_k(ξ) = √2 sin(ξ/√λ_k)`, the k-th L²([0,1]) eigenfunction.
    pub fn basis_eval(&self, k: usize, xi: f64) -> Result<f64> {
        self.check_index(k)?;
        if !(0.0..=1.0).contains(&xi) {
            return Err(Error::InvalidInput(format!("ξ = {xi} lies outside [0, 1]")));
        }
        Ok(basis_unchecked(self.eigenvalues[k - 1], xi))
    }

    /// Path `f(ξ) = Σ x_k √λ_k e_k(ξ)` represented by the coordinates `x`.
    pub fn embed_path(&self, x: &PathPoint, xi: f64) -> Result<f64> {
        if x.coords.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: x.coords.len() });
        }
        if !(0.0..=1.0).contains(&xi) {
            return Err(Error::InvalidInput(format!("ξ = {xi} lies outside [0, 1]")));
        }
        Ok(x
            .coords
            .iter()
            .zip(&self.eigenvalues)
            .map(|(&c, &lam)| c * lam.sqrt() * basis_unchecked(lam, xi))
            .sum())
    }

    /// Coefficients `√λ_k e_k(ξ)` for all `k`, i.e. the gradient of `x ↦ f_x(ξ)`.
    pub fn path_gradient(&self, xi: f64) -> Vec<f64> {
        self.eigenvalues.iter().map(|&lam| lam.sqrt() * basis_unchecked(lam, xi)).collect()
    }

    /// Sampler on stream 0.
    pub fn sampler(&self) -> GaussianSampler {
        GaussianSampler::new(self.n, self.seed, 0)
    }

    /// Independent sampler on the given substream.
    pub fn substream(&self, stream: u64) -> GaussianSampler {
        GaussianSampler::new(self.n, self.seed, stream)
    }
}

#[inline]
pub(crate) fn basis_unchecked(lam: f64, xi: f64) -> f64 {
    std::f64::consts::SQRT_2 * (xi / lam.sqrt()).sin()
}

/// A point of the truncated space, i.e. the KL coordinates of a path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPoint {
    pub coords: Vec<f64>,
}

impl PathPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        Self { coords }
    }
}

/// Standard Gaussian sampler backed by a counter-based ChaCha stream.
///
/// Substreams with distinct ids never overlap, so parallel workers each get
/// their own sampler instead of sharing one.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    dim: usize,
    rng: ChaCha12Rng,
}

impl GaussianSampler {
    pub fn new(dim: usize, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { dim, rng }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn next_scalar(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        (0..self.dim).map(|_| self.next_scalar()).collect()
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.next_scalar();
        }
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        use rand::Rng;
        self.rng.random_range(lo..hi)
    }
}
