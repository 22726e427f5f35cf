//! Convex weights `U` for `ν = e^{−U}μ`: the path functionals
//! `U₁(f) = Φ(∫f dτ)` and `U₂(f) = ∫Ψ(f(ξ), ξ) dξ`, simple sanity weights,
//! and the penalized potential `V_α = U_α + d²(·, Ω)/(2α)`.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::domains::{ConvexDomain, distance_sq};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::model::TruncatedModel;
use crate::prox::{prox, ConvexPotential, ProxOptions};
use crate::quadrature::gauss_legendre;

#[derive(Debug, Clone, PartialEq)]
pub struct ZeroWeight {
    dim: usize,
}

impl ZeroWeight {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl ConvexPotential for ZeroWeight {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, _x: &[f64]) -> f64 {
        0.0
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        vec![0.0; x.len()]
    }
    fn hessian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::zeros(x.len(), x.len()))
    }
    fn has_hessian(&self) -> bool {
        true
    }
    fn is_zero(&self) -> bool {
        true
    }
}

/// `U(x) = scale·|x|²/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticWeight {
    dim: usize,
    scale: f64,
}

impl QuadraticWeight {
    pub fn new(dim: usize, scale: f64) -> Self {
        Self { dim, scale }
    }
}

impl ConvexPotential for QuadraticWeight {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        0.5 * self.scale * dot(x, x)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| self.scale * v).collect()
    }
    fn hessian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::identity(x.len(), x.len()) * self.scale)
    }
    fn has_hessian(&self) -> bool {
        true
    }
}

/// `U(x) = ⟨b, x⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPotential {
    b: Vec<f64>,
}

impl LinearPotential {
    pub fn new(b: Vec<f64>) -> Self {
        Self { b }
    }
}

impl ConvexPotential for LinearPotential {
    fn dim(&self) -> usize {
        self.b.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        dot(&self.b, x)
    }
    fn gradient(&self, _x: &[f64]) -> Vec<f64> {
        self.b.clone()
    }
    fn hessian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::zeros(x.len(), x.len()))
    }
    fn has_hessian(&self) -> bool {
        true
    }
}

/// Convex scalar profile with first and second derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarConvex {
    Cosh,
    Square,
    Softplus,
    Constant(f64),
}

impl ScalarConvex {
    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "cosh" => ScalarConvex::Cosh,
            "square" => ScalarConvex::Square,
            "softplus" => ScalarConvex::Softplus,
            _ => return None,
        })
    }

    pub fn value(self, s: f64) -> f64 {
        match self {
            ScalarConvex::Cosh => s.cosh(),
            ScalarConvex::Square => s * s,
            // log(1 + e^s) without overflow
            ScalarConvex::Softplus => s.max(0.0) + (-s.abs()).exp().ln_1p(),
            ScalarConvex::Constant(c) => c,
        }
    }

    pub fn d1(self, s: f64) -> f64 {
        match self {
            ScalarConvex::Cosh => s.sinh(),
            ScalarConvex::Square => 2.0 * s,
            ScalarConvex::Softplus => 1.0 / (1.0 + (-s).exp()),
            ScalarConvex::Constant(_) => 0.0,
        }
    }

    pub fn d2(self, s: f64) -> f64 {
        match self {
            ScalarConvex::Cosh => s.cosh(),
            ScalarConvex::Square => 2.0,
            ScalarConvex::Softplus => {
                let e = (-s.abs()).exp();
                e / ((1.0 + e) * (1.0 + e))
            }
            ScalarConvex::Constant(_) => 0.0,
        }
    }

    /// A `(C, β)` pair with `|Φ′(s)| ≤ C e^{β|s|}`.
    pub fn default_growth(self) -> Growth {
        match self {
            ScalarConvex::Cosh | ScalarConvex::Softplus => Growth { c: 1.0, beta: 1.0 },
            ScalarConvex::Square => Growth { c: 2.0, beta: 1.0 },
            ScalarConvex::Constant(_) => Growth { c: 0.0, beta: 1.0 },
        }
    }
}

/// Growth constants for `|Φ′(s)| ≤ C e^{β|s|}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Growth {
    pub c: f64,
    pub beta: f64,
}

/// `U₁(x) = Φ(⟨t, x⟩)` with `t_k = √λ_k ∫ e_k dτ`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightU1 {
    phi: ScalarConvex,
    tau: Vec<(f64, f64)>,
    t_coeffs: Vec<f64>,
    growth: Growth,
}

impl WeightU1 {
    /// `tau` is a finite positive measure on `[0, 1]` as `(ξ_j, mass_j)` pairs.
    pub fn new(model: &TruncatedModel, phi: ScalarConvex, tau: Vec<(f64, f64)>, growth: Growth) -> Result<Self> {
        if tau.is_empty() {
            return Err(Error::InvalidInput("τ must have at least one atom".into()));
        }
        let mut t = vec![0.0; model.dim()];
        for &(xi, w) in &tau {
            if !(0.0..=1.0).contains(&xi) || !(w >= 0.0) {
                return Err(Error::InvalidInput(format!("invalid τ atom ({xi}, {w})")));
            }
            for (tk, gk) in t.iter_mut().zip(model.path_gradient(xi)) {
                *tk += w * gk;
            }
        }
        Ok(Self { phi, tau, t_coeffs: t, growth })
    }

    /// `τ` discretized from Lebesgue measure on `[0, 1]` with a Gauss–Legendre rule.
    pub fn uniform_tau(nodes: usize) -> Vec<(f64, f64)> {
        let (x, w) = gauss_legendre(nodes, 0.0, 1.0);
        x.into_iter().zip(w).collect()
    }

    pub fn t_coeffs(&self) -> &[f64] {
        &self.t_coeffs
    }

    pub fn tau(&self) -> &[(f64, f64)] {
        &self.tau
    }

    pub fn phi(&self) -> ScalarConvex {
        self.phi
    }

    pub fn growth(&self) -> Growth {
        self.growth
    }

    /// `(U₁(x), ∇U₁(x))`.
    pub fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let s = dot(&self.t_coeffs, x);
        let d = self.phi.d1(s);
        (self.phi.value(s), self.t_coeffs.iter().map(|t| d * t).collect())
    }
}

impl ConvexPotential for WeightU1 {
    fn dim(&self) -> usize {
        self.t_coeffs.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.phi.value(dot(&self.t_coeffs, x))
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.eval(x).1
    }
    fn hessian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        let d2 = self.phi.d2(dot(&self.t_coeffs, x));
        let n = self.t_coeffs.len();
        Some(DMatrix::from_fn(n, n, |i, j| d2 * self.t_coeffs[i] * self.t_coeffs[j]))
    }
    fn has_hessian(&self) -> bool {
        true
    }
}

/// Integrand profile `Ψ(s, ξ)` of `U₂`, convex in `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PsiKind {
    Square,
    Cosh,
}

impl PsiKind {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "square" => Some(PsiKind::Square),
            "cosh" => Some(PsiKind::Cosh),
            _ => None,
        }
    }

    fn profile(self) -> ScalarConvex {
        match self {
            PsiKind::Square => ScalarConvex::Square,
            PsiKind::Cosh => ScalarConvex::Cosh,
        }
    }

    pub fn value(self, s: f64, _xi: f64) -> f64 {
        self.profile().value(s)
    }

    pub fn ds(self, s: f64, _xi: f64) -> f64 {
        self.profile().d1(s)
    }

    pub fn dss(self, s: f64, _xi: f64) -> f64 {
        self.profile().d2(s)
    }
}

/// `U₂(x) = Σ_j ω_j Ψ(f_x(ξ_j), ξ_j)` on a Gauss–Legendre rule in ξ.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightU2 {
    psi: PsiKind,
    xi: Vec<f64>,
    omega: Vec<f64>,
    /// Row j holds `√λ_k e_k(ξ_j)` for all k.
    path: Vec<Vec<f64>>,
    /// `C(ξ_j)` for the growth bound `|∂Ψ/∂s| ≤ C(ξ) e^{β|s|}`.
    growth_c: Vec<f64>,
    beta: f64,
}

impl WeightU2 {
    pub fn new(model: &TruncatedModel, psi: PsiKind, xi_nodes: usize, growth: Growth) -> Result<Self> {
        if xi_nodes == 0 {
            return Err(Error::InvalidInput("xi_nodes must be ≥ 1".into()));
        }
        if !(growth.c >= 0.0) || !(growth.beta > 0.0) {
            return Err(Error::InvalidInput("growth constants must satisfy C ≥ 0, β > 0".into()));
        }
        let (xi, omega) = gauss_legendre(xi_nodes, 0.0, 1.0);
        let path = xi.iter().map(|&s| model.path_gradient(s)).collect();
        let growth_c = vec![growth.c; xi.len()];
        Ok(Self { psi, xi, omega, path, growth_c, beta: growth.beta })
    }

    pub fn psi(&self) -> PsiKind {
        self.psi
    }

    pub fn growth_c(&self) -> &[f64] {
        &self.growth_c
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `Σ_j ω_j C(ξ_j)²`, finite by construction.
    pub fn growth_l2_sq(&self) -> f64 {
        self.omega.iter().zip(&self.growth_c).map(|(w, c)| w * c * c).sum()
    }

    /// `(U₂(x), ∇U₂(x))`.
    pub fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let mut value = 0.0;
        let mut grad = vec![0.0; x.len()];
        for ((&xi, &w), row) in self.xi.iter().zip(&self.omega).zip(&self.path) {
            let f = dot(row, x);
            value += w * self.psi.value(f, xi);
            let d = w * self.psi.ds(f, xi);
            for (g, r) in grad.iter_mut().zip(row) {
                *g += d * r;
            }
        }
        (value, grad)
    }
}

impl ConvexPotential for WeightU2 {
    fn dim(&self) -> usize {
        self.path.first().map_or(0, Vec::len)
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.xi
            .iter()
            .zip(&self.omega)
            .zip(&self.path)
            .map(|((&xi, &w), row)| w * self.psi.value(dot(row, x), xi))
            .sum()
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.eval(x).1
    }
    fn hessian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        let n = x.len();
        let mut h = DMatrix::zeros(n, n);
        for ((&xi, &w), row) in self.xi.iter().zip(&self.omega).zip(&self.path) {
            let d2 = w * self.psi.dss(dot(row, x), xi);
            for i in 0..n {
                for j in 0..n {
                    h[(i, j)] += d2 * row[i] * row[j];
                }
            }
        }
        Some(h)
    }
    fn has_hessian(&self) -> bool {
        true
    }
}

/// How the smooth part of `V_α` is realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    /// `U_α` from the prox solver.
    Envelope,
    /// `U` itself ("exact-weight mode").
    Exact,
}

/// `V_α(x) = U_α(x) + d²(x, Ω)/(2α)`.
#[derive(Debug, Clone)]
pub struct PenalizedPotential {
    base: Arc<dyn ConvexPotential>,
    domain: Arc<dyn ConvexDomain>,
    alpha: f64,
    mode: WeightMode,
    opts: ProxOptions,
}

impl PenalizedPotential {
    pub fn new(base: Arc<dyn ConvexPotential>, domain: Arc<dyn ConvexDomain>, alpha: f64, mode: WeightMode) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidInput(format!("penalization α must be positive, got {alpha}")));
        }
        if base.dim() != domain.dim() {
            return Err(Error::DimensionMismatch { expected: base.dim(), found: domain.dim() });
        }
        Ok(Self { base, domain, alpha, mode, opts: ProxOptions::default() })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn domain(&self) -> &Arc<dyn ConvexDomain> {
        &self.domain
    }

    pub fn base(&self) -> &Arc<dyn ConvexPotential> {
        &self.base
    }

    pub fn mode(&self) -> WeightMode {
        self.mode
    }

    fn smooth_part(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        if self.base.is_zero() {
            return Ok((0.0, vec![0.0; x.len()]));
        }
        match self.mode {
            WeightMode::Exact => Ok((self.base.value(x), self.base.gradient(x))),
            WeightMode::Envelope => {
                let r = prox(&*self.base, x, self.alpha, &self.opts)?;
                Ok((r.envelope_value, r.envelope_grad))
            }
        }
    }

    /// Penalty term `d²(x, Ω)/(2α)` alone.
    pub fn penalty(&self, x: &[f64]) -> Result<f64> {
        Ok(distance_sq(&*self.domain, x)? / (2.0 * self.alpha))
    }

    /// `(V_α(x), ∇V_α(x))` with `∇V_α = ∇U_α + m(x, Ω)/α`.
    pub fn eval(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (mut value, mut grad) = self.smooth_part(x)?;
        if !self.domain.contains(x) {
            let p = self.domain.project(x)?;
            value += dot(&p.offset, &p.offset) / (2.0 * self.alpha);
            for (g, m) in grad.iter_mut().zip(&p.offset) {
                *g += m / self.alpha;
            }
        }
        Ok((value, grad))
    }
}

impl ConvexPotential for PenalizedPotential {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x).map(|v| v.0).unwrap_or(f64::NAN)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.eval(x).map(|v| v.1).unwrap_or_else(|_| vec![f64::NAN; x.len()])
    }
}

/// Outcome of probing a growth bound on a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthReport {
    pub max_ratio: f64,
    pub worst_s: f64,
}

/// Probe grid for growth certificates.
pub const GROWTH_PROBE_RANGE: f64 = 20.0;
const GROWTH_PROBE_POINTS: usize = 4001;

fn probe_growth(mut ratio: impl FnMut(f64) -> f64) -> Result<GrowthReport> {
    let mut report = GrowthReport { max_ratio: 0.0, worst_s: 0.0 };
    for i in 0..GROWTH_PROBE_POINTS {
        let s = -GROWTH_PROBE_RANGE + 2.0 * GROWTH_PROBE_RANGE * i as f64 / (GROWTH_PROBE_POINTS - 1) as f64;
        let r = ratio(s);
        if r > report.max_ratio || !r.is_finite() {
            report = GrowthReport { max_ratio: r, worst_s: s };
        }
    }
    if report.max_ratio <= 1.0 {
        Ok(report)
    } else {
        Err(Error::GrowthViolation { worst_s: report.worst_s, ratio: report.max_ratio })
    }
}

fn bound_ratio(deriv: f64, c: f64, beta: f64, s: f64) -> f64 {
    let bound = c * (beta * s.abs()).exp();
    if deriv == 0.0 {
        0.0
    } else if bound == 0.0 {
        f64::INFINITY
    } else {
        deriv.abs() / bound
    }
}

pub fn growth_certificate_u1(w: &WeightU1) -> Result<GrowthReport> {
    let g = w.growth;
    probe_growth(|s| bound_ratio(w.phi.d1(s), g.c, g.beta, s))
}

pub fn growth_certificate_u2(w: &WeightU2) -> Result<GrowthReport> {
    if w.growth_c.iter().any(|c| !(*c >= 0.0)) {
        return Err(Error::Validation("C(ξ) must be nonnegative".into()));
    }
    probe_growth(|s| {
        w.xi.iter()
            .zip(&w.growth_c)
            .map(|(&xi, &c)| bound_ratio(w.psi.ds(s, xi), c, w.beta, s))
            .fold(0.0, f64::max)
    })
}
