//! Convex sublevel domains `Ω = {G ≤ 0}`, H-projection and H-distance.
//!
//! In KL coordinates the H-norm is Euclidean, so the offset `m(x, Ω)` is
//! `x − p` with `p` the Euclidean nearest point of Ω, and
//! `∇ d²(·, Ω) = 2m`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, sub};
use crate::model::{GaussianSampler, TruncatedModel};

/// Iteration cap for the ellipsoid multiplier search.
pub const PROJECTION_MAX_ITER: usize = 200;
/// Stopping tolerance on the secular function `φ(t)`.
pub const PROJECTION_TOL: f64 = 1e-12;
/// Number of domain samples used to certify the variational inequality.
pub const VI_SAMPLES: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    /// Nearest point of Ω.
    pub point: Vec<f64>,
    /// `m = x − p`.
    pub offset: Vec<f64>,
    pub distance: f64,
    pub iterations: usize,
    /// Smallest sampled value of `⟨(x − c) − m, m⟩` over `c ∈ Ω`, when certified.
    pub vi_residual: Option<f64>,
}

impl ProjectionResult {
    fn identity(x: &[f64]) -> Self {
        Self {
            point: x.to_vec(),
            offset: vec![0.0; x.len()],
            distance: 0.0,
            iterations: 0,
            vi_residual: None,
        }
    }

    fn from_point(x: &[f64], point: Vec<f64>, iterations: usize) -> Self {
        let offset = sub(x, &point);
        let distance = norm(&offset);
        Self { point, offset, distance, iterations, vi_residual: None }
    }
}

/// Closed-form description used by domain-adapted quadrature.
#[derive(Debug, Clone, Copy)]
pub enum DomainShape<'a> {
    Whole,
    Halfspace { normal: &'a [f64], offset: f64 },
    Ellipsoid { axis_weights: &'a [f64], radius: f64 },
    Generic,
}

pub trait ConvexDomain: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn g_value(&self, x: &[f64]) -> f64;
    fn g_grad(&self, x: &[f64]) -> Vec<f64>;
    fn g_hess(&self, x: &[f64]) -> DMatrix<f64>;
    fn project(&self, x: &[f64]) -> Result<ProjectionResult>;

    fn shape(&self) -> DomainShape<'_> {
        DomainShape::Generic
    }

    fn contains(&self, x: &[f64]) -> bool {
        self.g_value(x) <= 0.0
    }

    fn kind_name(&self) -> &'static str {
        match self.shape() {
            DomainShape::Whole => "whole",
            DomainShape::Halfspace { .. } => "halfspace",
            DomainShape::Ellipsoid { .. } => "ellipsoid",
            DomainShape::Generic => "generic",
        }
    }
}

/// `{⟨a, x⟩ ≤ c}` with `a ≠ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfspaceDomain {
    a: Vec<f64>,
    c: f64,
    a_norm_sq: f64,
}

impl HalfspaceDomain {
    pub fn new(a: Vec<f64>, c: f64) -> Result<Self> {
        let a_norm_sq = dot(&a, &a);
        if a.is_empty() || a_norm_sq == 0.0 || !a_norm_sq.is_finite() || !c.is_finite() {
            return Err(Error::InvalidInput("halfspace normal must be finite and nonzero".into()));
        }
        Ok(Self { a, c, a_norm_sq })
    }

    /// Halfspace `{∫ f dσ ≤ c}` for a discrete measure σ given as `(ξ_j, mass_j)`.
    pub fn from_measure(model: &TruncatedModel, sigma: &[(f64, f64)], c: f64) -> Result<Self> {
        let mut a = vec![0.0; model.dim()];
        for &(xi, mass) in sigma {
            if !(0.0..=1.0).contains(&xi) {
                return Err(Error::InvalidInput(format!("σ node {xi} outside [0, 1]")));
            }
            for (ak, gk) in a.iter_mut().zip(model.path_gradient(xi)) {
                *ak += mass * gk;
            }
        }
        Self::new(a, c)
    }

    pub fn normal(&self) -> &[f64] {
        &self.a
    }

    pub fn offset(&self) -> f64 {
        self.c
    }
}

impl ConvexDomain for HalfspaceDomain {
    fn dim(&self) -> usize {
        self.a.len()
    }

    fn g_value(&self, x: &[f64]) -> f64 {
        dot(&self.a, x) - self.c
    }

    fn g_grad(&self, _x: &[f64]) -> Vec<f64> {
        self.a.clone()
    }

    fn g_hess(&self, _x: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(self.a.len(), self.a.len())
    }

    fn project(&self, x: &[f64]) -> Result<ProjectionResult> {
        let g = self.g_value(x);
        if g <= 0.0 {
            return Ok(ProjectionResult::identity(x));
        }
        let s = g / self.a_norm_sq;
        let offset: Vec<f64> = self.a.iter().map(|a| s * a).collect();
        let point = sub(x, &offset);
        let distance = norm(&offset);
        Ok(ProjectionResult { point, offset, distance, iterations: 0, vi_residual: None })
    }

    fn shape(&self) -> DomainShape<'_> {
        DomainShape::Halfspace { normal: &self.a, offset: self.c }
    }
}

/// `{Σ λ_k x_k² ≤ r²}`, i.e. `‖f‖²_{L²[0,1]} ≤ r²` for the embedded path.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidDomain {
    weights: Vec<f64>,
    r: f64,
}

impl EllipsoidDomain {
    pub fn new(axis_weights: Vec<f64>, r: f64) -> Result<Self> {
        if axis_weights.is_empty() || axis_weights.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidInput("ellipsoid axis weights must be positive".into()));
        }
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::InvalidInput("ellipsoid radius must be positive".into()));
        }
        Ok(Self { weights: axis_weights, r })
    }

    pub fn for_model(model: &TruncatedModel, r: f64) -> Result<Self> {
        Self::new(model.eigenvalues().to_vec(), r)
    }

    pub fn axis_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn radius(&self) -> f64 {
        self.r
    }

    fn secular(&self, x: &[f64], t: f64) -> (f64, f64) {
        let mut phi = -self.r * self.r;
        let mut dphi = 0.0;
        for (&l, &xk) in self.weights.iter().zip(x) {
            let d = 1.0 + 2.0 * t * l;
            let lx2 = l * xk * xk;
            phi += lx2 / (d * d);
            dphi -= 4.0 * l * lx2 / (d * d * d);
        }
        (phi, dphi)
    }
}

impl ConvexDomain for EllipsoidDomain {
    fn dim(&self) -> usize {
        self.weights.len()
    }

    fn g_value(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(l, v)| l * v * v).sum::<f64>() - self.r * self.r
    }

    fn g_grad(&self, x: &[f64]) -> Vec<f64> {
        self.weights.iter().zip(x).map(|(l, v)| 2.0 * l * v).collect()
    }

    fn g_hess(&self, _x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.weights.len(),
            self.weights.iter().map(|l| 2.0 * l),
        ))
    }

    fn project(&self, x: &[f64]) -> Result<ProjectionResult> {
        if self.g_value(x) <= 0.0 {
            return Ok(ProjectionResult::identity(x));
        }
        // φ is convex and strictly decreasing on [0, ∞); every term is bounded by
        // x_k²/(4t²λ_k), which gives the upper end of the bracket.
        let spread: f64 = self.weights.iter().zip(x).map(|(l, v)| v * v / l).sum();
        let mut lo = 0.0;
        let mut hi = spread.sqrt() / (2.0 * self.r);
        let mut t = 0.0;
        for it in 1..=PROJECTION_MAX_ITER {
            let (phi, dphi) = self.secular(x, t);
            if phi.abs() <= PROJECTION_TOL {
                let point = self.weights.iter().zip(x).map(|(l, v)| v / (1.0 + 2.0 * t * l)).collect();
                return Ok(ProjectionResult::from_point(x, point, it));
            }
            if phi > 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            let newton = t - phi / dphi;
            t = if newton.is_finite() && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo <= f64::EPSILON * hi.max(1.0) {
                // Bracket collapsed to machine precision; accept the midpoint.
                let t = 0.5 * (lo + hi);
                let point: Vec<f64> =
                    self.weights.iter().zip(x).map(|(l, v)| v / (1.0 + 2.0 * t * l)).collect();
                if self.g_value(&point) <= 1e-10 {
                    return Ok(ProjectionResult::from_point(x, point, it));
                }
            }
        }
        Err(Error::ProjectionIterationLimit { iterations: PROJECTION_MAX_ITER, lo, hi })
    }

    fn shape(&self) -> DomainShape<'_> {
        DomainShape::Ellipsoid { axis_weights: &self.weights, radius: self.r }
    }
}

/// The whole space, `G ≡ −1`.
#[derive(Debug, Clone, PartialEq)]
pub struct WholeSpace {
    dim: usize,
}

impl WholeSpace {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl ConvexDomain for WholeSpace {
    fn dim(&self) -> usize {
        self.dim
    }
    fn g_value(&self, _x: &[f64]) -> f64 {
        -1.0
    }
    fn g_grad(&self, _x: &[f64]) -> Vec<f64> {
        vec![0.0; self.dim]
    }
    fn g_hess(&self, _x: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(self.dim, self.dim)
    }
    fn project(&self, x: &[f64]) -> Result<ProjectionResult> {
        Ok(ProjectionResult::identity(x))
    }
    fn shape(&self) -> DomainShape<'_> {
        DomainShape::Whole
    }
}

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type MatrixFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
type Projector = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>;

/// Domain assembled from user-supplied closures, including the projector.
#[derive(Clone)]
pub struct FnDomain {
    dim: usize,
    value: ScalarFn,
    grad: VectorFn,
    hess: MatrixFn,
    projector: Projector,
}

impl FnDomain {
    pub fn new(dim: usize, value: ScalarFn, grad: VectorFn, hess: MatrixFn, projector: Projector) -> Self {
        Self { dim, value, grad, hess, projector }
    }
}

impl fmt::Debug for FnDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnDomain").field("dim", &self.dim).finish_non_exhaustive()
    }
}

impl ConvexDomain for FnDomain {
    fn dim(&self) -> usize {
        self.dim
    }
    fn g_value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }
    fn g_grad(&self, x: &[f64]) -> Vec<f64> {
        (self.grad)(x)
    }
    fn g_hess(&self, x: &[f64]) -> DMatrix<f64> {
        (self.hess)(x)
    }
    fn project(&self, x: &[f64]) -> Result<ProjectionResult> {
        if self.contains(x) {
            return Ok(ProjectionResult::identity(x));
        }
        let p = (self.projector)(x)?;
        Ok(ProjectionResult::from_point(x, p, 0))
    }
}

/// `d²(x, Ω)`, exactly zero on Ω.
pub fn distance_sq(domain: &dyn ConvexDomain, x: &[f64]) -> Result<f64> {
    if domain.contains(x) {
        return Ok(0.0);
    }
    let p = domain.project(x)?;
    Ok(dot(&p.offset, &p.offset))
}

/// `∇ d²(·, Ω)(x) = 2 m(x, Ω)`.
pub fn grad_distance_sq(domain: &dyn ConvexDomain, x: &[f64]) -> Result<Vec<f64>> {
    let p = domain.project(x)?;
    Ok(p.offset.iter().map(|m| 2.0 * m).collect())
}

/// `max_h |m(x + h) − m(x)| / |h|`.
pub fn lipschitz_probe(domain: &dyn ConvexDomain, x: &[f64], displacements: &[Vec<f64>]) -> Result<f64> {
    let base = domain.project(x)?;
    let mut worst: f64 = 0.0;
    for h in displacements {
        let hn = norm(h);
        if hn == 0.0 {
            return Err(Error::InvalidInput("Lipschitz probe displacement must be nonzero".into()));
        }
        let xh: Vec<f64> = x.iter().zip(h).map(|(a, b)| a + b).collect();
        let moved = domain.project(&xh)?;
        worst = worst.max(norm(&sub(&moved.offset, &base.offset)) / hn);
    }
    Ok(worst)
}

/// Points of Ω biased toward the boundary: projections of scaled Gaussian draws.
pub fn sample_domain(domain: &dyn ConvexDomain, sampler: &mut GaussianSampler, count: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let scale = 1.0 + 3.0 * (i % 4) as f64;
        let z: Vec<f64> = sampler.next_point().into_iter().map(|v| v * scale).collect();
        out.push(domain.project(&z)?.point);
    }
    Ok(out)
}

/// Projection of `x` plus the sampled variational-inequality certificate
/// `min_c ⟨(x − c) − m, m⟩`.
pub fn project_certified(
    domain: &dyn ConvexDomain,
    x: &[f64],
    samples: &[Vec<f64>],
) -> Result<ProjectionResult> {
    let mut res = domain.project(x)?;
    let worst = samples
        .iter()
        .map(|c| {
            let h = sub(x, c);
            dot(&sub(&h, &res.offset), &res.offset)
        })
        .fold(f64::INFINITY, f64::min);
    res.vi_residual = Some(if samples.is_empty() { 0.0 } else { worst });
    Ok(res)
}
