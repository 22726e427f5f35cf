//! Quadrature against the standard Gaussian on ℝⁿ.
//!
//! One-dimensional Gauss rules are generated from three-term recurrences
//! (Golub–Welsch followed by a Newton polish and Christoffel weights). Rules
//! for non-classical weights, like the Gaussian restricted to a half-line, come
//! from a discretized Stieltjes procedure.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::TruncatedModel;
use crate::parallel::{tree_reduce, CHUNK};

/// Default cap on tensor-rule sizes.
pub const DEFAULT_NODE_BUDGET: usize = 1 << 21;

/// Sampler substream reserved for Monte Carlo quadrature nodes.
pub(crate) const QUADRATURE_STREAM: u64 = 0x5155_4144;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RuleKind {
    TensorGaussHermite,
    MonteCarlo,
    /// Half-line Gauss rule normal to a hyperplane, tensor Gauss–Hermite along it.
    HalfspaceGauss,
    /// Radial Gauss–Legendre times an angular rule, mapped onto an ellipsoid.
    EllipsoidPolar,
    /// Gauss rules on both sides of a hyperplane, the outer one adapted to a
    /// quadratic penalty.
    PenalizedSplit,
    /// Rule on a hypersurface (boundary integrals).
    Surface,
}

impl RuleKind {
    pub fn name(self) -> &'static str {
        match self {
            RuleKind::TensorGaussHermite => "tensor-gauss-hermite",
            RuleKind::MonteCarlo => "monte-carlo",
            RuleKind::HalfspaceGauss => "halfspace-gauss",
            RuleKind::EllipsoidPolar => "ellipsoid-polar",
            RuleKind::PenalizedSplit => "penalized-split",
            RuleKind::Surface => "surface",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "tensor-gauss-hermite" => RuleKind::TensorGaussHermite,
            "monte-carlo" => RuleKind::MonteCarlo,
            "halfspace-gauss" => RuleKind::HalfspaceGauss,
            "ellipsoid-polar" => RuleKind::EllipsoidPolar,
            "penalized-split" => RuleKind::PenalizedSplit,
            _ => return None,
        })
    }
}

/// Value of an integral together with its Monte Carlo standard error
/// (zero for deterministic rules).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

/// Nodes and positive weights in ℝⁿ, stored row-major.
///
/// Weights integrate against the (unnormalized) Gaussian measure restricted to
/// the region the rule covers; whole-space rules sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    kind: RuleKind,
    dim: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// Monte Carlo draws: count and per-draw weight (nodes may be a masked subset).
    mc: Option<(usize, f64)>,
}

impl QuadratureRule {
    pub fn new(kind: RuleKind, dim: usize, nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 || nodes.len() != dim * weights.len() {
            return Err(Error::InvalidInput(format!(
                "rule with {} weights and {} coordinates is inconsistent with dimension {dim}",
                weights.len(),
                nodes.len()
            )));
        }
        Ok(Self { kind, dim, nodes, weights, mc: None })
    }

    /// Equal-weight Monte Carlo rule; `nodes` are the accepted draws out of `samples`.
    pub(crate) fn monte_carlo(kind: RuleKind, dim: usize, nodes: Vec<f64>, draw_weight: f64, samples: usize) -> Self {
        let count = nodes.len() / dim;
        Self { kind, dim, nodes, weights: vec![draw_weight; count], mc: Some((samples, draw_weight)) }
    }

    pub fn kind(&self) -> RuleKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn nodes_flat(&self) -> &[f64] {
        &self.nodes
    }

    pub fn samples(&self) -> Option<usize> {
        self.mc.map(|m| m.0)
    }

    pub fn is_stochastic(&self) -> bool {
        self.mc.is_some()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.nodes.chunks_exact(self.dim).zip(self.weights.iter().copied())
    }

    /// Deterministic parallel weighted sum.
    pub fn integrate<F>(&self, f: F) -> f64
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        self.sums(|x| {
            let v = f(x);
            (v, 0.0)
        })
        .0
    }

    /// Integral plus standard error for Monte Carlo rules.
    pub fn estimate<F>(&self, f: F) -> Estimate
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let (s1, s2) = self.sums(|x| {
            let v = f(x);
            (v, v * v)
        });
        Estimate { value: s1, stderr: self.stderr_from_sums(s1, s2) }
    }

    /// Standard error of `S = Σ w g` given `S` and `Σ w g²`. Each of the `N`
    /// draws carries weight `c`, so `Var S ≈ (c Σwg² − S²/N)·N/(N−1)`.
    pub(crate) fn stderr_from_sums(&self, s1: f64, s2: f64) -> f64 {
        match self.mc {
            Some((n, c)) if n > 1 => {
                let nf = n as f64;
                ((c * s2 - s1 * s1 / nf).max(0.0) * nf / (nf - 1.0)).sqrt()
            }
            _ => 0.0,
        }
    }

    fn sums<F>(&self, f: F) -> (f64, f64)
    where
        F: Fn(&[f64]) -> (f64, f64) + Sync,
    {
        let dim = self.dim;
        let parts: Vec<(f64, f64)> = self
            .weights
            .par_chunks(CHUNK)
            .zip(self.nodes.par_chunks(CHUNK * dim))
            .map(|(ws, xs)| {
                let mut a = 0.0;
                let mut b = 0.0;
                for (w, x) in ws.iter().zip(xs.chunks_exact(dim)) {
                    let (u, v) = f(x);
                    a += w * u;
                    b += w * v;
                }
                (a, b)
            })
            .collect();
        tree_reduce(parts, |p, q| (p.0 + q.0, p.1 + q.1)).unwrap_or((0.0, 0.0))
    }
}

/// Whole-space rule builder.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureBuilder {
    pub node_budget: usize,
}

impl Default for QuadratureBuilder {
    fn default() -> Self {
        Self { node_budget: DEFAULT_NODE_BUDGET }
    }
}

impl QuadratureBuilder {
    /// Rule against the n-dimensional standard Gaussian. `resolution` is the
    /// number of points per axis for tensor rules and the number of draws for
    /// Monte Carlo.
    pub fn build(&self, model: &TruncatedModel, kind: RuleKind, resolution: usize) -> Result<QuadratureRule> {
        if resolution == 0 {
            return Err(Error::InvalidInput("quadrature resolution must be ≥ 1".into()));
        }
        let n = model.dim();
        match kind {
            RuleKind::TensorGaussHermite => {
                let (x, w) = gauss_hermite(resolution);
                let axes = vec![(x, w); n];
                tensor_rule(&axes, self.node_budget, RuleKind::TensorGaussHermite)
            }
            RuleKind::MonteCarlo => {
                let mut sampler = model.substream(QUADRATURE_STREAM);
                let mut nodes = vec![0.0; resolution * n];
                sampler.fill(&mut nodes);
                let w = 1.0 / resolution as f64;
                Ok(QuadratureRule::monte_carlo(RuleKind::MonteCarlo, n, nodes, w, resolution))
            }
            other => Err(Error::Unsupported(format!(
                "{} rules depend on a domain; build them through the domain rule constructors",
                other.name()
            ))),
        }
    }
}

/// Shortcut for [`QuadratureBuilder::build`] with the default node budget.
pub fn build_quadrature(model: &TruncatedModel, kind: RuleKind, resolution: usize) -> Result<QuadratureRule> {
    QuadratureBuilder::default().build(model, kind, resolution)
}

/// Tensor product of 1-D rules, the first axis varying slowest.
pub fn tensor_rule(axes: &[(Vec<f64>, Vec<f64>)], budget: usize, kind: RuleKind) -> Result<QuadratureRule> {
    let dim = axes.len();
    let count: u128 = axes.iter().map(|(x, _)| x.len() as u128).product();
    if count > budget as u128 {
        return Err(Error::NodeBudget { nodes: count, budget });
    }
    let count = count as usize;
    let mut nodes = Vec::with_capacity(count * dim);
    let mut weights = Vec::with_capacity(count);
    let mut idx = vec![0usize; dim];
    for _ in 0..count {
        let mut w = 1.0;
        for (a, &i) in idx.iter().enumerate() {
            nodes.push(axes[a].0[i]);
            w *= axes[a].1[i];
        }
        weights.push(w);
        for a in (0..dim).rev() {
            idx[a] += 1;
            if idx[a] < axes[a].0.len() {
                break;
            }
            idx[a] = 0;
        }
    }
    QuadratureRule::new(kind, dim, nodes, weights)
}

/// Gauss–Legendre nodes and weights on `[a, b]`.
pub fn gauss_legendre(q: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; q];
    let mut w = vec![0.0; q];
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    for i in 0..q.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (q as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(q, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                let (_, d) = legendre_with_derivative(q, z);
                dp = d;
                break;
            }
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = mid - half * z;
        x[q - 1 - i] = mid + half * z;
        w[i] = half * wi;
        w[q - 1 - i] = half * wi;
    }
    (x, w)
}

fn legendre_with_derivative(q: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if q == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=q {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = q as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Gauss rule for the standard Gaussian `γ` (probabilists' Hermite).
pub fn gauss_hermite(q: usize) -> (Vec<f64>, Vec<f64>) {
    let alpha = vec![0.0; q];
    // β_0 = total mass, β_k = k for the monic probabilists' Hermite recurrence.
    let beta: Vec<f64> = (0..q).map(|k| if k == 0 { 1.0 } else { k as f64 }).collect();
    gauss_from_recurrence(&alpha, &beta)
}

/// Gauss rule from monic recurrence coefficients `p_{k+1} = (x − α_k) p_k − β_k p_{k−1}`,
/// with `β_0` the total mass. Uses `q = alpha.len()` nodes.
pub fn gauss_from_recurrence(alpha: &[f64], beta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let q = alpha.len();
    assert_eq!(beta.len(), q);
    if q == 1 {
        return (vec![alpha[0]], vec![beta[0]]);
    }
    let mut jac = DMatrix::<f64>::zeros(q, q);
    for k in 0..q {
        jac[(k, k)] = alpha[k];
        if k + 1 < q {
            let b = beta[k + 1].sqrt();
            jac[(k, k + 1)] = b;
            jac[(k + 1, k)] = b;
        }
    }
    let eig = SymmetricEigen::new(jac);
    let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut weights = Vec::with_capacity(q);
    for z in nodes.iter_mut() {
        // Newton polish on the orthonormal degree-q polynomial.
        for _ in 0..3 {
            let (p, dp, _) = orthonormal_eval(alpha, beta, *z);
            if dp == 0.0 {
                break;
            }
            let step = p / dp;
            if step.is_finite() {
                *z -= step;
            }
        }
        let (_, _, christoffel) = orthonormal_eval(alpha, beta, *z);
        weights.push(1.0 / christoffel);
    }
    (nodes, weights)
}

/// Returns `(p_q(z), p_q'(z), Σ_{k<q} p_k(z)²)` for the orthonormal family.
fn orthonormal_eval(alpha: &[f64], beta: &[f64], z: f64) -> (f64, f64, f64) {
    let q = alpha.len();
    let mut p_prev = 0.0;
    let mut d_prev = 0.0;
    let mut p = 1.0 / beta[0].sqrt();
    let mut d = 0.0;
    let mut sum = p * p;
    for k in 0..q {
        let sb_next = if k + 1 < q { beta[k + 1].sqrt() } else { next_beta_guess(beta).sqrt() };
        let sb = if k == 0 { 0.0 } else { beta[k].sqrt() };
        let p_next = ((z - alpha[k]) * p - sb * p_prev) / sb_next;
        let d_next = ((z - alpha[k]) * d + p - sb * d_prev) / sb_next;
        p_prev = p;
        d_prev = d;
        p = p_next;
        d = d_next;
        if k + 1 < q {
            sum += p * p;
        }
    }
    (p, d, sum)
}

// The scale of p_q does not affect its zeros; any positive normalizer works.
fn next_beta_guess(beta: &[f64]) -> f64 {
    beta.last().copied().filter(|b| *b > 0.0).unwrap_or(1.0)
}

/// Monic recurrence coefficients (`q` of each) for the discrete measure
/// `Σ_i w_i δ_{t_i}`, via Lanczos with full reorthogonalization.
pub fn discrete_recurrence(points: &[f64], weights: &[f64], q: usize) -> (Vec<f64>, Vec<f64>) {
    let n = points.len();
    let mass: f64 = weights.iter().sum();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(q);
    let mut alpha = Vec::with_capacity(q);
    let mut beta = Vec::with_capacity(q);
    beta.push(mass);
    let mut v: Vec<f64> = weights.iter().map(|w| (w / mass).sqrt()).collect();
    for k in 0..q {
        let a: f64 = (0..n).map(|i| points[i] * v[i] * v[i]).sum();
        alpha.push(a);
        if k + 1 == q {
            break;
        }
        let mut r: Vec<f64> = (0..n).map(|i| (points[i] - a) * v[i]).collect();
        if let Some(prev) = basis.last() {
            let sb = beta[k].sqrt();
            for i in 0..n {
                r[i] -= sb * prev[i];
            }
        }
        basis.push(v.clone());
        for _ in 0..2 {
            for b in &basis {
                let c: f64 = r.iter().zip(b).map(|(x, y)| x * y).sum();
                for i in 0..n {
                    r[i] -= c * b[i];
                }
            }
        }
        let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        beta.push(norm * norm);
        v = r.into_iter().map(|x| x / norm).collect();
    }
    (alpha, beta)
}

/// Gauss rule with `q` nodes for a smooth weight on `[a, b]`, computed from a
/// composite Gauss–Legendre discretization of the weight.
pub fn gauss_for_weight<W>(weight: W, a: f64, b: f64, q: usize, panels: usize) -> (Vec<f64>, Vec<f64>)
where
    W: Fn(f64) -> f64,
{
    const PANEL_POINTS: usize = 40;
    let h = (b - a) / panels as f64;
    let mut pts = Vec::with_capacity(panels * PANEL_POINTS);
    let mut wts = Vec::with_capacity(panels * PANEL_POINTS);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let (x, w) = gauss_legendre(PANEL_POINTS, lo, lo + h);
        for (xi, wi) in x.into_iter().zip(w) {
            let d = weight(xi) * wi;
            if d > 0.0 {
                pts.push(xi);
                wts.push(d);
            }
        }
    }
    let (alpha, beta) = discrete_recurrence(&pts, &wts, q);
    gauss_from_recurrence(&alpha, &beta)
}

/// Standard Gaussian density on ℝ.
#[inline]
pub fn gauss_density(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Gauss rule with `q` nodes for the standard Gaussian restricted to `(−∞, s]`.
pub fn half_line_gauss(q: usize, s: f64) -> (Vec<f64>, Vec<f64>) {
    let reach = (4.0 * q as f64).sqrt() + 10.0;
    let lo = s.min(0.0) - reach;
    let hi = s;
    if hi <= lo {
        return (vec![s], vec![0.0]);
    }
    let panels = ((hi - lo) / 0.5).ceil().max(1.0) as usize;
    gauss_for_weight(gauss_density, lo, hi, q, panels)
}
