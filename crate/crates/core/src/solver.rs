//! Weak-form Galerkin solver for `λu − Lu = f` in a total-degree Hermite space.
//!
//! With density `w`, `A_kl = ∫⟨∇φ_k, ∇φ_l⟩ w dγ`, `M_kl = ∫φ_kφ_l w dγ`,
//! `b_k = ∫fφ_k w dγ`, and the coefficients solve `(λM + A)c = b`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::domains::ConvexDomain;
use crate::error::{Error, Result};
use crate::hermite::{packed_index, BasisEval, HermiteBasis};
use crate::linalg::{check_spd, dot, solve_spd, SolveDiagnostics};
use crate::parallel::{tree_reduce, CHUNK};
use crate::prox::ConvexPotential;
use crate::quadrature::QuadratureRule;

/// Relative residual targeted by [`solve`].
pub const SOLVE_TOL: f64 = 1e-10;

/// Nodes with `G(x)` below this count as inside Ω (absorbs rotation round-off).
pub const MEMBERSHIP_SLACK: f64 = 1e-9;

/// Upper bound on the number of partial sums in assembly, fixed so the
/// reduction tree depends on the rule alone.
const MAX_BLOCKS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    /// `e^{−V}` on ℝⁿ (penalized or unconstrained problems).
    WholeSpace,
    /// `e^{−U}·1_Ω`.
    Domain,
}

/// Measure `w dγ` of a problem.
#[derive(Debug, Clone)]
pub enum Density {
    WholeSpace { potential: Arc<dyn ConvexPotential> },
    Domain { potential: Arc<dyn ConvexPotential>, domain: Arc<dyn ConvexDomain> },
}

impl Density {
    pub fn whole_space(potential: Arc<dyn ConvexPotential>) -> Self {
        Density::WholeSpace { potential }
    }

    pub fn on_domain(potential: Arc<dyn ConvexPotential>, domain: Arc<dyn ConvexDomain>) -> Result<Self> {
        if potential.dim() != domain.dim() {
            return Err(Error::DimensionMismatch { expected: potential.dim(), found: domain.dim() });
        }
        Ok(Density::Domain { potential, domain })
    }

    pub fn kind(&self) -> WeightKind {
        match self {
            Density::WholeSpace { .. } => WeightKind::WholeSpace,
            Density::Domain { .. } => WeightKind::Domain,
        }
    }

    pub fn dim(&self) -> usize {
        self.potential().dim()
    }

    pub fn potential(&self) -> &Arc<dyn ConvexPotential> {
        match self {
            Density::WholeSpace { potential } | Density::Domain { potential, .. } => potential,
        }
    }

    pub fn domain(&self) -> Option<&Arc<dyn ConvexDomain>> {
        match self {
            Density::WholeSpace { .. } => None,
            Density::Domain { domain, .. } => Some(domain),
        }
    }

    pub fn covers(&self, x: &[f64]) -> bool {
        match self {
            Density::WholeSpace { .. } => true,
            Density::Domain { domain, .. } => domain.g_value(x) <= MEMBERSHIP_SLACK,
        }
    }

    /// `w(x)`, zero outside Ω.
    pub fn weight_at(&self, x: &[f64]) -> f64 {
        if !self.covers(x) {
            return 0.0;
        }
        let p = self.potential();
        if p.is_zero() {
            1.0
        } else {
            (-p.value(x)).exp()
        }
    }

    /// `w(x)·(rule weight)` at every node, failing on the first non-finite value.
    pub fn node_weights(&self, rule: &QuadratureRule) -> Result<Vec<f64>> {
        let dens: Vec<f64> = (0..rule.len()).into_par_iter().map(|i| rule.weight(i) * self.weight_at(rule.node(i))).collect();
        match dens.iter().position(|d| !d.is_finite()) {
            Some(i) => Err(Error::NonFiniteIntegrand { node: rule.node(i).to_vec() }),
            None => Ok(dens),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GalerkinSystem {
    pub stiffness: DMatrix<f64>,
    pub mass: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub lambda: f64,
    pub weight_kind: WeightKind,
    basis: HermiteBasis,
}

impl GalerkinSystem {
    pub fn basis(&self) -> &HermiteBasis {
        &self.basis
    }

    /// `λM + A`.
    pub fn operator(&self) -> DMatrix<f64> {
        &self.mass * self.lambda + &self.stiffness
    }

    /// Same matrices with another `λ`.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        let mut s = self.clone();
        s.lambda = lambda;
        spd_or_inconsistent(&s.operator())?;
        Ok(s)
    }

    /// Same matrices with another right-hand side vector.
    pub fn with_rhs(&self, rhs: DVector<f64>) -> Result<Self> {
        if rhs.len() != self.rhs.len() {
            return Err(Error::DimensionMismatch { expected: self.rhs.len(), found: rhs.len() });
        }
        let mut s = self.clone();
        s.rhs = rhs;
        Ok(s)
    }

    /// Smallest eigenvalues of `λM + A` and of `M`.
    pub fn coercivity_witness(&self) -> (f64, f64) {
        let lo = |m: DMatrix<f64>| SymmetricEigen::new(m).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        (lo(self.operator()), lo(self.mass.clone()))
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("λ must be positive and finite, got {lambda}")))
    }
}

fn spd_or_inconsistent(m: &DMatrix<f64>) -> Result<()> {
    check_spd(m).map_err(|e| match e {
        Error::Conditioning { pivot, value } => {
            Error::AssemblyConsistency(format!("λM + A is not positive definite (pivot {pivot} = {value:e})"))
        }
        other => other,
    })
}

struct Partial {
    mass: DMatrix<f64>,
    stiffness: DMatrix<f64>,
    rhs: DVector<f64>,
}

impl Partial {
    fn zeros(k: usize) -> Self {
        Self { mass: DMatrix::zeros(k, k), stiffness: DMatrix::zeros(k, k), rhs: DVector::zeros(k) }
    }

    fn merge(mut self, other: Partial) -> Self {
        self.mass += other.mass;
        self.stiffness += other.stiffness;
        self.rhs += other.rhs;
        self
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let k = m.nrows();
    for i in 0..k {
        for j in i + 1..k {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Assemble the weak form of `λu − Lu = f` for the measure `density` with `rule`.
pub fn assemble<F>(basis: &HermiteBasis, density: &Density, f: F, lambda: f64, rule: &QuadratureRule) -> Result<GalerkinSystem>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    check_lambda(lambda)?;
    let n = basis.dim();
    if rule.dim() != n || density.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: if rule.dim() != n { rule.dim() } else { density.dim() } });
    }
    let k = basis.len();
    let dens = density.node_weights(rule)?;
    let fvals: Vec<f64> = (0..rule.len()).into_par_iter().map(|i| if dens[i] > 0.0 { f(rule.node(i)) } else { 0.0 }).collect();
    if let Some(i) = fvals.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteIntegrand { node: rule.node(i).to_vec() });
    }

    let chunks = rule.len().div_ceil(CHUNK).max(1);
    let blocks = chunks.min(MAX_BLOCKS);
    let parts: Vec<Partial> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut part = Partial::zeros(k);
            let mut ev = BasisEval::with_capacity(basis);
            for c in b * chunks / blocks..(b + 1) * chunks / blocks {
                let live: Vec<usize> = (c * CHUNK..((c + 1) * CHUNK).min(rule.len())).filter(|&i| dens[i] > 0.0).collect();
                if live.is_empty() {
                    continue;
                }
                let m = live.len();
                let mut phi = DMatrix::<f64>::zeros(m, k);
                let mut grad = DMatrix::<f64>::zeros(m * n, k);
                let mut sf = DVector::<f64>::zeros(m);
                for (r, &i) in live.iter().enumerate() {
                    basis.eval(rule.node(i), 1, &mut ev);
                    let s = dens[i].sqrt();
                    sf[r] = s * fvals[i];
                    for l in 0..k {
                        phi[(r, l)] = s * ev.values[l];
                        for j in 0..n {
                            grad[(r * n + j, l)] = s * ev.grads[l * n + j];
                        }
                    }
                }
                part.mass.gemm_tr(1.0, &phi, &phi, 1.0);
                part.stiffness.gemm_tr(1.0, &grad, &grad, 1.0);
                part.rhs.gemv_tr(1.0, &phi, &sf, 1.0);
            }
            part
        })
        .collect();
    let mut total = tree_reduce(parts, Partial::merge).unwrap_or_else(|| Partial::zeros(k));
    symmetrize(&mut total.mass);
    symmetrize(&mut total.stiffness);
    let system = GalerkinSystem {
        stiffness: total.stiffness,
        mass: total.mass,
        rhs: total.rhs,
        lambda,
        weight_kind: density.kind(),
        basis: basis.clone(),
    };
    spd_or_inconsistent(&system.operator())?;
    Ok(system)
}

/// Finite Hermite expansion `Σ c_k φ_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct HermiteExpansion {
    basis: HermiteBasis,
    coeffs: Vec<f64>,
}

/// Value, gradient and Hessian of a function at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointEval {
    pub value: f64,
    pub gradient: Option<Vec<f64>>,
    pub hessian: Option<DMatrix<f64>>,
}

impl HermiteExpansion {
    pub fn new(basis: HermiteBasis, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(Error::DimensionMismatch { expected: basis.len(), found: coeffs.len() });
        }
        Ok(Self { basis, coeffs })
    }

    /// The single basis function with multi-index `index`.
    pub fn basis_function(basis: HermiteBasis, index: &[usize]) -> Result<Self> {
        let pos = basis
            .position(index)
            .ok_or_else(|| Error::InvalidInput(format!("multi-index {index:?} is not in the basis")))?;
        let mut coeffs = vec![0.0; basis.len()];
        coeffs[pos] = 1.0;
        Ok(Self { basis, coeffs })
    }

    pub fn basis(&self) -> &HermiteBasis {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn evaluate_with(&self, x: &[f64], order: usize, ev: &mut BasisEval) -> PointEval {
        let n = self.basis.dim();
        let order = order.min(2);
        self.basis.eval(x, order, ev);
        let value = dot(&self.coeffs, &ev.values);
        let gradient = (order >= 1).then(|| {
            let mut g = vec![0.0; n];
            for (l, c) in self.coeffs.iter().enumerate() {
                for (j, gj) in g.iter_mut().enumerate() {
                    *gj += c * ev.grads[l * n + j];
                }
            }
            g
        });
        let hessian = (order >= 2).then(|| {
            let np = n * (n + 1) / 2;
            let mut packed = vec![0.0; np];
            for (l, c) in self.coeffs.iter().enumerate() {
                for (p, h) in packed.iter_mut().enumerate() {
                    *h += c * ev.hess[l * np + p];
                }
            }
            DMatrix::from_fn(n, n, |r, c| packed[packed_index(n, r, c)])
        });
        PointEval { value, gradient, hessian }
    }

    pub fn evaluate(&self, x: &[f64], order: usize) -> PointEval {
        let mut ev = BasisEval::with_capacity(&self.basis);
        self.evaluate_with(x, order, &mut ev)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.evaluate(x, 0).value
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.evaluate(x, 1).gradient.unwrap_or_default()
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        self.evaluate(x, 2).hessian.unwrap_or_else(|| DMatrix::zeros(0, 0))
    }
}

#[derive(Debug, Clone)]
pub struct GalerkinSolution {
    pub expansion: HermiteExpansion,
    pub lambda: f64,
    pub diagnostics: SolveDiagnostics,
    pub weight_kind: WeightKind,
}

impl GalerkinSolution {
    pub fn coeffs(&self) -> &[f64] {
        self.expansion.coeffs()
    }

    pub fn basis(&self) -> &HermiteBasis {
        self.expansion.basis()
    }

    pub fn evaluate(&self, x: &[f64], order: usize) -> PointEval {
        self.expansion.evaluate(x, order)
    }
}

/// Solve `(λM + A)c = b` by Cholesky with iterative refinement.
pub fn solve(system: &GalerkinSystem) -> Result<GalerkinSolution> {
    let (c, diagnostics) = solve_spd(&system.operator(), &system.rhs, SOLVE_TOL)?;
    Ok(GalerkinSolution {
        expansion: HermiteExpansion::new(system.basis.clone(), c.iter().copied().collect())?,
        lambda: system.lambda,
        diagnostics,
        weight_kind: system.weight_kind,
    })
}

/// `tr ∇²ψ(x) − ⟨x + ∇V(x), ∇ψ(x)⟩`.
pub fn apply_operator(potential: &dyn ConvexPotential, gradient: &[f64], hessian: &DMatrix<f64>, x: &[f64]) -> f64 {
    let dv = if potential.is_zero() { vec![0.0; x.len()] } else { potential.gradient(x) };
    let drift: f64 = x.iter().zip(&dv).zip(gradient).map(|((xi, vi), gi)| (xi + vi) * gi).sum();
    hessian.trace() - drift
}

/// `L ψ(x)` for a Hermite expansion.
pub fn apply_operator_expansion(potential: &dyn ConvexPotential, psi: &HermiteExpansion, x: &[f64]) -> f64 {
    let e = psi.evaluate(x, 2);
    apply_operator(potential, e.gradient.as_deref().unwrap_or(&[]), e.hessian.as_ref().expect("order 2"), x)
}

/// `‖λu − Lu − f‖_{L²(w dγ)}` with `rule`.
pub fn strong_residual<F>(sol: &GalerkinSolution, density: &Density, f: F, rule: &QuadratureRule) -> Result<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let dens = density.node_weights(rule)?;
    let pot = density.potential();
    let parts: Vec<f64> = (0..rule.len())
        .into_par_iter()
        .chunks(CHUNK)
        .map(|idx| {
            let mut ev = BasisEval::with_capacity(sol.basis());
            idx.into_iter()
                .filter(|&i| dens[i] > 0.0)
                .map(|i| {
                    let x = rule.node(i);
                    let e = sol.expansion.evaluate_with(x, 2, &mut ev);
                    let lu = apply_operator(&**pot, e.gradient.as_deref().unwrap(), e.hessian.as_ref().unwrap(), x);
                    let r = sol.lambda * e.value - lu - f(x);
                    dens[i] * r * r
                })
                .sum::<f64>()
        })
        .collect();
    Ok(tree_reduce(parts, |a, b| a + b).unwrap_or(0.0).sqrt())
}
