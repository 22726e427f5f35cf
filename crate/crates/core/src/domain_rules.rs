//! Quadrature adapted to convex domains and their boundaries.
//!
//! Volume rules integrate against the standard Gaussian restricted to Ω.
//! Boundary rules integrate against `(2π)^{-n/2} e^{-|x|²/2} dH_{n−1}` on `G = 0`.

use std::f64::consts::PI;

use crate::domains::{ConvexDomain, DomainShape};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::model::TruncatedModel;
use crate::quadrature::{
    gauss_density, gauss_for_weight, gauss_hermite, gauss_legendre, half_line_gauss, tensor_rule, QuadratureBuilder,
    QuadratureRule, RuleKind, DEFAULT_NODE_BUDGET, QUADRATURE_STREAM,
};

/// Draw count used when a Monte Carlo domain rule is requested below it.
pub const MIN_DOMAIN_SAMPLES: usize = 100_000;

/// Householder reflection exchanging `e₁` and the unit vector `u`.
#[derive(Debug, Clone)]
pub struct Frame {
    v: Vec<f64>,
    vv: f64,
}

impl Frame {
    pub fn new(u: &[f64]) -> Self {
        let mut v: Vec<f64> = u.iter().map(|x| -x).collect();
        v[0] += 1.0;
        let vv = dot(&v, &v);
        if vv < 1e-28 {
            Self { v: vec![0.0; u.len()], vv: 0.0 }
        } else {
            Self { v, vv }
        }
    }

    /// `y ↦ Q y`; the reflection is its own inverse.
    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        if self.vv == 0.0 {
            return y.to_vec();
        }
        let s = 2.0 * dot(&self.v, y) / self.vv;
        y.iter().zip(&self.v).map(|(a, b)| a - s * b).collect()
    }
}

fn unit_normal(normal: &[f64], offset: f64) -> (Vec<f64>, f64) {
    let len = norm(normal);
    (normal.iter().map(|a| a / len).collect(), offset / len)
}

/// Rotate a rule given in frame coordinates (`y₁` normal) into ℝⁿ.
fn rotated(frame: &Frame, axes: &[(Vec<f64>, Vec<f64>)], budget: usize, kind: RuleKind) -> Result<QuadratureRule> {
    let local = tensor_rule(axes, budget, kind)?;
    let dim = local.dim();
    let mut nodes = Vec::with_capacity(local.nodes_flat().len());
    for (y, _) in local.iter() {
        nodes.extend(frame.apply(y));
    }
    QuadratureRule::new(kind, dim, nodes, local.weights().to_vec())
}

/// `{⟨a,x⟩ ≤ c}`: half-line Gauss rule with `q_normal` nodes along `a/|a|`,
/// `q_tangent`-point Gauss–Hermite on the orthogonal complement.
pub fn halfspace_rule(normal: &[f64], offset: f64, q_normal: usize, q_tangent: usize, budget: usize) -> Result<QuadratureRule> {
    let (u, s) = unit_normal(normal, offset);
    let frame = Frame::new(&u);
    let mut axes = vec![half_line_gauss(q_normal, s)];
    for _ in 1..u.len() {
        axes.push(gauss_hermite(q_tangent));
    }
    rotated(&frame, &axes, budget, RuleKind::HalfspaceGauss)
}

/// Whole-space rule for a quadratic penalty `dist²/(2α)` outside `{⟨a,x⟩ ≤ c}`.
///
/// Inside, the half-line rule. Outside, a Gauss rule for `γ(y) e^{−(y−s)²/(2α)}`
/// on `[s, ∞)` whose weights are divided by the penalty factor again, so that
/// the rule still integrates against γ and smooth integrands times `e^{−V_α}`
/// are handled at the polynomial-exactness level.
pub fn penalized_split_rule(
    normal: &[f64],
    offset: f64,
    alpha: f64,
    q_normal: usize,
    q_tangent: usize,
    budget: usize,
) -> Result<QuadratureRule> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidInput(format!("penalty parameter must be positive, got {alpha}")));
    }
    let (u, s) = unit_normal(normal, offset);
    let frame = Frame::new(&u);
    let inner = half_line_gauss(q_normal, s);
    let sigma = (alpha / (1.0 + alpha)).sqrt();
    let centre = s.max(s / (1.0 + alpha));
    let hi = centre + sigma * ((4.0 * q_normal as f64).sqrt() + 10.0);
    let panels = ((hi - s) / (0.5 * sigma)).ceil().max(1.0) as usize;
    let pen = |y: f64| (-(y - s) * (y - s) / (2.0 * alpha)).exp();
    let (ox, ow) = gauss_for_weight(|y| gauss_density(y) * pen(y), s, hi, q_normal, panels);
    let ow: Vec<f64> = ox.iter().zip(ow).map(|(&y, w)| w / pen(y)).collect();
    let mut nx = inner.0;
    let mut nw = inner.1;
    nx.extend(ox);
    nw.extend(ow);
    let mut axes = vec![(nx, nw)];
    for _ in 1..u.len() {
        axes.push(gauss_hermite(q_tangent));
    }
    rotated(&frame, &axes, budget, RuleKind::PenalizedSplit)
}

/// Gaussian draws masked by `G ≤ 0`, each carrying weight `1/samples`.
pub fn masked_monte_carlo(model: &TruncatedModel, domain: &dyn ConvexDomain, samples: usize) -> Result<QuadratureRule> {
    let n = model.dim();
    if samples < 2 {
        return Err(Error::InvalidInput("Monte Carlo rules need at least two draws".into()));
    }
    let mut rng = model.substream(QUADRATURE_STREAM);
    let mut nodes = Vec::new();
    let mut x = vec![0.0; n];
    for _ in 0..samples {
        rng.fill(&mut x);
        if domain.contains(&x) {
            nodes.extend_from_slice(&x);
        }
    }
    if nodes.is_empty() {
        return Err(Error::InvalidInput(format!("no Monte Carlo draw out of {samples} fell inside the domain")));
    }
    Ok(QuadratureRule::monte_carlo(RuleKind::MonteCarlo, n, nodes, 1.0 / samples as f64, samples))
}

fn gauss_nd(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    (-0.5 * dot(x, x)).exp() / (2.0 * PI).powf(0.5 * n)
}

/// Unit-sphere rule `(y, dσ)` for n ≤ 3 with resolution `q`.
fn sphere_rule(n: usize, q: usize) -> Result<Vec<(Vec<f64>, f64)>> {
    Ok(match n {
        1 => vec![(vec![-1.0], 1.0), (vec![1.0], 1.0)],
        2 => {
            let m = 4 * q;
            (0..m)
                .map(|j| {
                    let t = 2.0 * PI * j as f64 / m as f64;
                    (vec![t.cos(), t.sin()], 2.0 * PI / m as f64)
                })
                .collect()
        }
        3 => {
            let (z, wz) = gauss_legendre(2 * q, -1.0, 1.0);
            let m = 4 * q;
            let mut out = Vec::with_capacity(z.len() * m);
            for (zi, wi) in z.iter().zip(&wz) {
                let rho = (1.0 - zi * zi).max(0.0).sqrt();
                for j in 0..m {
                    let t = 2.0 * PI * j as f64 / m as f64;
                    out.push((vec![rho * t.cos(), rho * t.sin(), *zi], wi * 2.0 * PI / m as f64));
                }
            }
            out
        }
        _ => return Err(Error::Unsupported(format!("angular rules are provided for n ≤ 3, got n = {n}"))),
    })
}

/// Deterministic ellipsoid rule, n ≤ 3: radial Gauss–Legendre (`q` nodes) times
/// an angular rule, through `x = D ρ y` with `D = diag(r/√λ_k)`.
pub fn ellipsoid_polar_rule(axis_weights: &[f64], radius: f64, q: usize) -> Result<QuadratureRule> {
    let n = axis_weights.len();
    let semi: Vec<f64> = axis_weights.iter().map(|l| radius / l.sqrt()).collect();
    let det: f64 = semi.iter().product();
    let sphere = sphere_rule(n, q)?;
    let (rho, wr) = if n == 1 { gauss_legendre(2 * q, 0.0, 1.0) } else { gauss_legendre(q, 0.0, 1.0) };
    let mut nodes = Vec::with_capacity(sphere.len() * rho.len() * n);
    let mut weights = Vec::with_capacity(sphere.len() * rho.len());
    for (y, ws) in &sphere {
        for (r, w) in rho.iter().zip(&wr) {
            let x: Vec<f64> = y.iter().zip(&semi).map(|(yi, s)| s * r * yi).collect();
            weights.push(gauss_nd(&x) * det * r.powi(n as i32 - 1) * w * ws);
            nodes.extend(x);
        }
    }
    QuadratureRule::new(RuleKind::EllipsoidPolar, n, nodes, weights)
}

/// Volume rule for Ω. `resolution` is the per-axis node count for Gauss rules
/// and the number of draws for Monte Carlo (raised to [`MIN_DOMAIN_SAMPLES`]
/// when a proper domain is masked).
pub fn domain_quadrature(
    model: &TruncatedModel,
    domain: &dyn ConvexDomain,
    kind: RuleKind,
    resolution: usize,
) -> Result<QuadratureRule> {
    check_dims(model, domain)?;
    if resolution == 0 {
        return Err(Error::InvalidInput("quadrature resolution must be ≥ 1".into()));
    }
    match (domain.shape(), kind) {
        (DomainShape::Whole, RuleKind::TensorGaussHermite | RuleKind::MonteCarlo) => {
            QuadratureBuilder::default().build(model, kind, resolution)
        }
        (DomainShape::Halfspace { normal, offset }, RuleKind::HalfspaceGauss | RuleKind::TensorGaussHermite) => {
            halfspace_rule(normal, offset, resolution, resolution, DEFAULT_NODE_BUDGET)
        }
        (DomainShape::Ellipsoid { axis_weights, radius }, RuleKind::EllipsoidPolar) => {
            ellipsoid_polar_rule(axis_weights, radius, resolution)
        }
        (_, RuleKind::MonteCarlo) => masked_monte_carlo(model, domain, resolution.max(MIN_DOMAIN_SAMPLES)),
        (shape, kind) => Err(Error::Unsupported(format!(
            "{} rules are not available for {} domains",
            kind.name(),
            shape_name(shape)
        ))),
    }
}

/// Whole-space rule for a problem penalized outside Ω with parameter α.
pub fn penalized_quadrature(
    model: &TruncatedModel,
    domain: &dyn ConvexDomain,
    alpha: f64,
    kind: RuleKind,
    resolution: usize,
) -> Result<QuadratureRule> {
    check_dims(model, domain)?;
    match (domain.shape(), kind) {
        (DomainShape::Halfspace { normal, offset }, RuleKind::PenalizedSplit | RuleKind::HalfspaceGauss) => {
            penalized_split_rule(normal, offset, alpha, resolution, resolution, DEFAULT_NODE_BUDGET)
        }
        (_, RuleKind::TensorGaussHermite | RuleKind::MonteCarlo) => QuadratureBuilder::default().build(model, kind, resolution),
        (shape, kind) => Err(Error::Unsupported(format!(
            "{} rules are not available for penalized problems on {} domains",
            kind.name(),
            shape_name(shape)
        ))),
    }
}

/// Rule on `G = 0` against the Gaussian surface measure.
pub fn boundary_rule(domain: &dyn ConvexDomain, resolution: usize) -> Result<QuadratureRule> {
    let n = domain.dim();
    match domain.shape() {
        DomainShape::Halfspace { normal, offset } => {
            let (u, s) = unit_normal(normal, offset);
            let frame = Frame::new(&u);
            let mut axes = vec![(vec![s], vec![gauss_density(s)])];
            for _ in 1..n {
                axes.push(gauss_hermite(resolution));
            }
            rotated(&frame, &axes, DEFAULT_NODE_BUDGET, RuleKind::Surface)
        }
        DomainShape::Ellipsoid { axis_weights, radius } => {
            let semi: Vec<f64> = axis_weights.iter().map(|l| radius / l.sqrt()).collect();
            let det: f64 = semi.iter().product();
            let sphere = sphere_rule(n, resolution)?;
            let mut nodes = Vec::with_capacity(sphere.len() * n);
            let mut weights = Vec::with_capacity(sphere.len());
            for (y, ws) in &sphere {
                let x: Vec<f64> = y.iter().zip(&semi).map(|(yi, s)| s * yi).collect();
                let stretch = y.iter().zip(&semi).map(|(yi, s)| (yi / s).powi(2)).sum::<f64>().sqrt();
                weights.push(gauss_nd(&x) * det * stretch * ws);
                nodes.extend(x);
            }
            QuadratureRule::new(RuleKind::Surface, n, nodes, weights)
        }
        shape => Err(Error::Unsupported(format!("no boundary parametrization for {} domains", shape_name(shape)))),
    }
}

fn shape_name(shape: DomainShape<'_>) -> &'static str {
    match shape {
        DomainShape::Whole => "whole",
        DomainShape::Halfspace { .. } => "halfspace",
        DomainShape::Ellipsoid { .. } => "ellipsoid",
        DomainShape::Generic => "generic",
    }
}

fn check_dims(model: &TruncatedModel, domain: &dyn ConvexDomain) -> Result<()> {
    if model.dim() != domain.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: domain.dim() });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::{EllipsoidDomain, HalfspaceDomain, WholeSpace};

    /// Φ(s) by composite Gauss–Legendre on [−40, s].
    fn normal_cdf(s: f64) -> f64 {
        let panels = 400;
        let h = (s + 40.0) / panels as f64;
        (0..panels)
            .map(|p| {
                let (x, w) = gauss_legendre(20, -40.0 + p as f64 * h, -40.0 + (p + 1) as f64 * h);
                x.iter().zip(&w).map(|(x, w)| w * gauss_density(*x)).sum::<f64>()
            })
            .sum()
    }

    #[test]
    fn frame_maps_first_axis_to_normal() {
        let u = [0.6, 0.0, 0.8];
        let f = Frame::new(&u);
        let e = f.apply(&[1.0, 0.0, 0.0]);
        for (a, b) in e.iter().zip(&u) {
            assert!((a - b).abs() < 1e-15);
        }
        let back = f.apply(&f.apply(&[0.3, -1.0, 2.0]));
        assert!((back[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn halfspace_masses_and_moments() {
        let r = halfspace_rule(&[1.0, 0.0], 0.0, 20, 10, DEFAULT_NODE_BUDGET).unwrap();
        assert!((r.total_weight() - 0.5).abs() < 1e-13);
        assert!((r.integrate(|x| x[1] * x[1]) - 0.5).abs() < 1e-13);
        let r = halfspace_rule(&[1.0, 1.0], 1.0, 24, 12, DEFAULT_NODE_BUDGET).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert!((r.total_weight() - normal_cdf(s)).abs() < 1e-12);
        // E[x₁ 1{⟨â,x⟩ ≤ s}] = −â₁ γ(s)
        assert!((r.integrate(|x| x[0]) + s * gauss_density(s)).abs() < 1e-13);
        for (x, _) in r.iter() {
            assert!(x[0] + x[1] <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn penalized_split_mass() {
        for &alpha in &[1.0, 0.1, 0.01] {
            let r = penalized_split_rule(&[1.0], 0.0, alpha, 30, 1, DEFAULT_NODE_BUDGET).unwrap();
            let got = r.integrate(|x| (-(x[0].max(0.0)).powi(2) / (2.0 * alpha)).exp());
            let want = 0.5 + 0.5 / (1.0 + 1.0 / alpha).sqrt();
            assert!((got - want).abs() < 1e-13, "alpha {alpha}: {got} vs {want}");
        }
    }

    #[test]
    fn polar_rule_masses() {
        let r = 1.3;
        let disc = ellipsoid_polar_rule(&[1.0, 1.0], r, 30).unwrap();
        assert!((disc.total_weight() - (1.0 - (-r * r / 2.0).exp())).abs() < 1e-13);
        let ball = ellipsoid_polar_rule(&[1.0, 1.0, 1.0], r, 30).unwrap();
        let want = 2.0 * normal_cdf(r) - 1.0 - (2.0 / PI).sqrt() * r * (-r * r / 2.0).exp();
        assert!((ball.total_weight() - want).abs() < 1e-12);
        let seg = ellipsoid_polar_rule(&[0.25], 0.5, 20).unwrap();
        assert!((seg.total_weight() - (2.0 * normal_cdf(1.0) - 1.0)).abs() < 1e-13);
    }

    #[test]
    fn boundary_masses() {
        let h = HalfspaceDomain::new(vec![2.0], 0.0).unwrap();
        let b = boundary_rule(&h, 8).unwrap();
        assert_eq!(b.len(), 1);
        assert!((b.weight(0) - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-15);
        let r = 0.9;
        let circle = EllipsoidDomain::new(vec![1.0, 1.0], r).unwrap();
        let b = boundary_rule(&circle, 16).unwrap();
        assert!((b.total_weight() - r * (-r * r / 2.0).exp()).abs() < 1e-13);
        let sphere = EllipsoidDomain::new(vec![1.0, 1.0, 1.0], r).unwrap();
        let b = boundary_rule(&sphere, 16).unwrap();
        let want = 4.0 * PI * r * r * (-r * r / 2.0).exp() / (2.0 * PI).powf(1.5);
        assert!((b.total_weight() - want).abs() < 1e-13);
        for (x, _) in b.iter() {
            assert!(sphere.g_value(x).abs() < 1e-12);
        }
    }

    #[test]
    fn elliptic_perimeter_weight() {
        // ∫ dH₁ over an ellipse equals its perimeter; compare with a fine polygon.
        let d = EllipsoidDomain::new(vec![1.0, 0.25], 1.0).unwrap();
        let b = boundary_rule(&d, 64).unwrap();
        let length = b.integrate(|x| 1.0 / gauss_nd(x));
        let m = 200_000;
        let mut poly = 0.0;
        for j in 0..m {
            let t0 = 2.0 * PI * j as f64 / m as f64;
            let t1 = 2.0 * PI * (j + 1) as f64 / m as f64;
            poly += ((t1.cos() - t0.cos()).powi(2) + (2.0 * (t1.sin() - t0.sin())).powi(2)).sqrt();
        }
        assert!((length - poly).abs() < 1e-8);
    }

    #[test]
    fn masked_monte_carlo_mass() {
        let model = TruncatedModel::new(2, 11).unwrap();
        let h = HalfspaceDomain::new(vec![1.0, 0.0], 0.0).unwrap();
        let rule = domain_quadrature(&model, &h, RuleKind::MonteCarlo, 10).unwrap();
        assert_eq!(rule.samples(), Some(MIN_DOMAIN_SAMPLES));
        let est = rule.estimate(|_| 1.0);
        assert!((est.value - 0.5).abs() < 4.0 * est.stderr);
        assert!((est.stderr - 0.5 / (MIN_DOMAIN_SAMPLES as f64).sqrt()).abs() < 1e-4);
    }

    #[test]
    fn unsupported_combinations() {
        let model = TruncatedModel::new(2, 0).unwrap();
        let e = EllipsoidDomain::for_model(&model, 1.0).unwrap();
        assert!(matches!(
            domain_quadrature(&model, &e, RuleKind::TensorGaussHermite, 8),
            Err(Error::Unsupported(_))
        ));
        assert!(matches!(boundary_rule(&WholeSpace::new(2), 8), Err(Error::Unsupported(_))));
    }
}
