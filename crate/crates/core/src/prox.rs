//! Moreau–Yosida approximation along H.
//!
//! For a convex potential `U` and `α > 0`,
//! `U_α(x) = inf_h U(x + h) + |h|²/(2α)`. The infimum is attained at a unique
//! shift `P(x, α)` and `∇U_α(x) = −P(x, α)/α`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{add, dot, norm, sub};
use crate::model::GaussianSampler;

/// Convex, finite, differentiable potential on ℝⁿ.
pub trait ConvexPotential: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;

    fn hessian(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        None
    }

    fn has_hessian(&self) -> bool {
        false
    }

    fn convexity_declared(&self) -> bool {
        true
    }

    /// True when the potential vanishes identically; lets callers skip work.
    fn is_zero(&self) -> bool {
        false
    }
}

impl<T: ConvexPotential + ?Sized> ConvexPotential for Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (**self).gradient(x)
    }
    fn hessian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        (**self).hessian(x)
    }
    fn has_hessian(&self) -> bool {
        (**self).has_hessian()
    }
    fn convexity_declared(&self) -> bool {
        (**self).convexity_declared()
    }
    fn is_zero(&self) -> bool {
        (**self).is_zero()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxOptions {
    /// Tolerance on the inner gradient norm, relative to `max(1, |P|/α)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ProxOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 500 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxResult {
    pub minimizer: Vec<f64>,
    pub envelope_value: f64,
    pub envelope_grad: Vec<f64>,
    pub iterations: usize,
    pub grad_residual: f64,
}

const ARMIJO_C: f64 = 1e-4;
const SHRINK: f64 = 0.5;

struct Inner<'a, U: ?Sized> {
    u: &'a U,
    x: &'a [f64],
    alpha: f64,
}

impl<U: ConvexPotential + ?Sized> Inner<'_, U> {
    fn shifted(&self, h: &[f64]) -> Vec<f64> {
        add(self.x, h)
    }

    fn value(&self, h: &[f64]) -> f64 {
        self.u.value(&self.shifted(h)) + dot(h, h) / (2.0 * self.alpha)
    }

    fn grad(&self, h: &[f64]) -> Vec<f64> {
        let g = self.u.gradient(&self.shifted(h));
        g.iter().zip(h).map(|(g, h)| g + h / self.alpha).collect()
    }

    fn converged(&self, h: &[f64], gnorm: f64, tol: f64) -> bool {
        gnorm <= tol * (norm(h) / self.alpha).max(1.0)
    }
}

fn finite_or_err(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("{what} evaluated to {v}")))
    }
}

/// Minimizer `P(x, α)` of `h ↦ U(x + h) + |h|²/(2α)` and the envelope data.
///
/// Damped Newton when `U` supplies a Hessian, otherwise gradient descent with
/// Armijo backtracking starting from the step `α/(1 + αL̂)`.
pub fn prox<U: ConvexPotential + ?Sized>(u: &U, x: &[f64], alpha: f64, opts: &ProxOptions) -> Result<ProxResult> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidInput(format!("prox level α must be positive, got {alpha}")));
    }
    if x.len() != u.dim() {
        return Err(Error::DimensionMismatch { expected: u.dim(), found: x.len() });
    }
    let inner = Inner { u, x, alpha };
    // Start from the better of h = 0 and the explicit step −α∇U(x).
    let g0 = u.gradient(x);
    let explicit: Vec<f64> = g0.iter().map(|g| -alpha * g).collect();
    let v0 = finite_or_err(inner.value(&vec![0.0; x.len()]), "potential")?;
    let v1 = inner.value(&explicit);
    let h = if v1.is_finite() && v1 < v0 { explicit } else { vec![0.0; x.len()] };
    let (h, iterations, residual) = if u.has_hessian() {
        newton(&inner, h, opts)?
    } else {
        descent(&inner, h, opts)?
    };
    let shifted = inner.shifted(&h);
    let envelope_value = finite_or_err(u.value(&shifted) + dot(&h, &h) / (2.0 * alpha), "envelope")?;
    let envelope_grad = h.iter().map(|p| -p / alpha).collect();
    Ok(ProxResult { minimizer: h, envelope_value, envelope_grad, iterations, grad_residual: residual })
}

fn newton<U: ConvexPotential + ?Sized>(
    inner: &Inner<'_, U>,
    mut h: Vec<f64>,
    opts: &ProxOptions,
) -> Result<(Vec<f64>, usize, f64)> {
    let n = h.len();
    let mut val = finite_or_err(inner.value(&h), "inner objective")?;
    let mut damping = 0.0;
    let mut grad = inner.grad(&h);
    let mut gnorm = norm(&grad);
    for it in 0..opts.max_iter {
        if inner.converged(&h, gnorm, opts.tol) {
            return Ok((h, it, gnorm));
        }
        let hess = inner
            .u
            .hessian(&inner.shifted(&h))
            .ok_or_else(|| Error::InvalidInput("potential advertised a Hessian but returned none".into()))?;
        let mut accepted = false;
        for _ in 0..30 {
            let mut m = hess.clone();
            for i in 0..n {
                m[(i, i)] += 1.0 / inner.alpha + damping;
            }
            let rhs = DVector::from_iterator(n, grad.iter().map(|g| -g));
            let Some(step) = m.cholesky().map(|c| c.solve(&rhs)) else {
                damping = if damping == 0.0 { 1e-8 / inner.alpha } else { damping * 10.0 };
                continue;
            };
            let step: Vec<f64> = step.iter().copied().collect();
            let slope = dot(&grad, &step);
            let mut t = 1.0;
            while t > 1e-12 {
                let trial: Vec<f64> = h.iter().zip(&step).map(|(a, b)| a + t * b).collect();
                let tv = inner.value(&trial);
                if tv.is_finite() && tv <= val + ARMIJO_C * t * slope {
                    let tg = inner.grad(&trial);
                    let tn = norm(&tg);
                    // Near the optimum the objective stops resolving decreases;
                    // only accept a flat step if it also shrinks the gradient.
                    if tv < val || tn < gnorm {
                        h = trial;
                        val = tv;
                        grad = tg;
                        gnorm = tn;
                        accepted = true;
                    }
                    break;
                }
                t *= SHRINK;
            }
            if accepted {
                damping = if t == 1.0 { damping * 0.1 } else { damping };
                if damping < 1e-14 {
                    damping = 0.0;
                }
                break;
            }
            damping = if damping == 0.0 { 1e-6 / inner.alpha } else { damping * 10.0 };
        }
        if !accepted {
            if inner.converged(&h, gnorm, opts.tol * 1e3) {
                return Ok((h, it, gnorm));
            }
            return Err(Error::ProxIterationLimit { iterations: it, residual: gnorm, best: h });
        }
    }
    if inner.converged(&h, gnorm, opts.tol) {
        return Ok((h, opts.max_iter, gnorm));
    }
    Err(Error::ProxIterationLimit { iterations: opts.max_iter, residual: gnorm, best: h })
}

fn descent<U: ConvexPotential + ?Sized>(
    inner: &Inner<'_, U>,
    mut h: Vec<f64>,
    opts: &ProxOptions,
) -> Result<(Vec<f64>, usize, f64)> {
    let alpha = inner.alpha;
    let mut val = finite_or_err(inner.value(&h), "inner objective")?;
    let mut grad = inner.grad(&h);
    let mut gnorm = norm(&grad);
    let mut lip_est = 0.0f64;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    for it in 0..opts.max_iter {
        if inner.converged(&h, gnorm, opts.tol) {
            return Ok((h, it, gnorm));
        }
        let mut t = alpha / (1.0 + alpha * lip_est);
        // Allow growth when the running estimate is pessimistic.
        t *= 2.0;
        let sq = gnorm * gnorm;
        let mut moved = false;
        while t > 1e-16 * alpha {
            let trial: Vec<f64> = h.iter().zip(&grad).map(|(a, g)| a - t * g).collect();
            let tv = inner.value(&trial);
            if tv.is_finite() && tv <= val - ARMIJO_C * t * sq {
                let tg = inner.grad(&trial);
                let tn = norm(&tg);
                if tv < val || tn < gnorm {
                    prev = Some((h.clone(), grad.clone()));
                    h = trial;
                    val = tv;
                    grad = tg;
                    gnorm = tn;
                    moved = true;
                }
                break;
            }
            t *= SHRINK;
        }
        if !moved {
            if inner.converged(&h, gnorm, opts.tol * 1e3) {
                return Ok((h, it, gnorm));
            }
            return Err(Error::ProxIterationLimit { iterations: it, residual: gnorm, best: h });
        }
        if let Some((ph, pg)) = &prev {
            // Secant estimate of the Lipschitz constant of ∇U.
            let dh = norm(&sub(&h, ph));
            if dh > 0.0 {
                let dg: Vec<f64> = grad.iter().zip(pg).zip(h.iter().zip(ph)).map(|((g, pg), (a, b))| (g - a / alpha) - (pg - b / alpha)).collect();
                lip_est = (norm(&dg) / dh).max(0.0);
            }
        }
    }
    if inner.converged(&h, gnorm, opts.tol) {
        return Ok((h, opts.max_iter, gnorm));
    }
    Err(Error::ProxIterationLimit { iterations: opts.max_iter, residual: gnorm, best: h })
}

pub fn envelope_value<U: ConvexPotential + ?Sized>(u: &U, x: &[f64], alpha: f64, opts: &ProxOptions) -> Result<f64> {
    Ok(prox(u, x, alpha, opts)?.envelope_value)
}

pub fn envelope_grad<U: ConvexPotential + ?Sized>(u: &U, x: &[f64], alpha: f64, opts: &ProxOptions) -> Result<Vec<f64>> {
    Ok(prox(u, x, alpha, opts)?.envelope_grad)
}

/// `U_α` viewed as a potential in its own right. Its gradient is `−P/α`; its
/// Hessian `(∇²U + I/α)⁻¹∇²U/α` is supplied when `U` has one.
///
/// Evaluation failures of the inner problem surface as NaN.
#[derive(Debug, Clone)]
pub struct Envelope {
    base: Arc<dyn ConvexPotential>,
    alpha: f64,
    opts: ProxOptions,
}

impl Envelope {
    pub fn new(base: Arc<dyn ConvexPotential>, alpha: f64, opts: ProxOptions) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidInput(format!("envelope level α must be positive, got {alpha}")));
        }
        Ok(Self { base, alpha, opts })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn base(&self) -> &Arc<dyn ConvexPotential> {
        &self.base
    }

    pub fn eval(&self, x: &[f64]) -> Result<ProxResult> {
        prox(&*self.base, x, self.alpha, &self.opts)
    }
}

impl ConvexPotential for Envelope {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        if self.base.is_zero() {
            return 0.0;
        }
        self.eval(x).map(|r| r.envelope_value).unwrap_or(f64::NAN)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        if self.base.is_zero() {
            return vec![0.0; x.len()];
        }
        self.eval(x).map(|r| r.envelope_grad).unwrap_or_else(|_| vec![f64::NAN; x.len()])
    }

    fn hessian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        let n = x.len();
        if self.base.is_zero() {
            return Some(DMatrix::zeros(n, n));
        }
        let p = self.eval(x).ok()?;
        let h = self.base.hessian(&add(x, &p.minimizer))?;
        let mut shifted = h.clone();
        for i in 0..n {
            shifted[(i, i)] += 1.0 / self.alpha;
        }
        let sol = shifted.cholesky()?.solve(&h) / self.alpha;
        Some((&sol + sol.transpose()) * 0.5)
    }

    fn has_hessian(&self) -> bool {
        self.base.has_hessian()
    }

    fn is_zero(&self) -> bool {
        self.base.is_zero()
    }
}

/// `((U_α)_β(x), U_{α+β}(x))`.
pub fn semigroup_check(
    u: &Arc<dyn ConvexPotential>,
    x: &[f64],
    alpha: f64,
    beta: f64,
    opts: &ProxOptions,
) -> Result<(f64, f64)> {
    if !(beta > 0.0) {
        return Err(Error::InvalidInput(format!("β must be positive, got {beta}")));
    }
    let env = Envelope::new(u.clone(), alpha, *opts)?;
    let lhs = prox(&env, x, beta, opts)?.envelope_value;
    let rhs = envelope_value(&**u, x, alpha + beta, opts)?;
    Ok((lhs, rhs))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientNorms {
    /// `|∇U_{α+β}(x)|`
    pub coarse: f64,
    /// `|∇U_α(x)|`
    pub fine: f64,
    /// `|∇U(x)|`
    pub potential: f64,
}

pub fn gradient_monotonicity_check<U: ConvexPotential + ?Sized>(
    u: &U,
    x: &[f64],
    alpha: f64,
    beta: f64,
    opts: &ProxOptions,
) -> Result<GradientNorms> {
    let fine = norm(&envelope_grad(u, x, alpha, opts)?);
    let coarse = norm(&envelope_grad(u, x, alpha + beta, opts)?);
    Ok(GradientNorms { coarse, fine, potential: norm(&u.gradient(x)) })
}

/// `min_h U(x + h) − U(x + P) − ⟨∇U_α(x), h − P⟩`; nonnegative when
/// `∇U_α(x)` is a subgradient of `U` at `x + P`.
pub fn subdifferential_inclusion_check<U: ConvexPotential + ?Sized>(
    u: &U,
    x: &[f64],
    alpha: f64,
    probes: &[Vec<f64>],
    opts: &ProxOptions,
) -> Result<f64> {
    let p = prox(u, x, alpha, opts)?;
    let base = u.value(&add(x, &p.minimizer));
    Ok(probes
        .iter()
        .map(|h| u.value(&add(x, h)) - base - dot(&p.envelope_grad, &sub(h, &p.minimizer)))
        .fold(f64::INFINITY, f64::min))
}

/// Spot checks of a potential's declared structure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialProbe {
    /// `max value((x+y)/2) − (value(x)+value(y))/2`, should be ≤ 1e−9.
    pub midpoint_violation: f64,
    /// Worst relative error between `gradient` and central differences.
    pub gradient_error: f64,
}

pub fn probe_potential<U: ConvexPotential + ?Sized>(
    u: &U,
    sampler: &mut GaussianSampler,
    count: usize,
    spread: f64,
) -> PotentialProbe {
    let mut mid: f64 = f64::NEG_INFINITY;
    let mut gerr: f64 = 0.0;
    for _ in 0..count {
        let x: Vec<f64> = sampler.next_point().iter().map(|v| v * spread).collect();
        let y: Vec<f64> = sampler.next_point().iter().map(|v| v * spread).collect();
        let m: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
        let vm = u.value(&m);
        let avg = 0.5 * (u.value(&x) + u.value(&y));
        mid = mid.max((vm - avg) / (1.0 + avg.abs()).max(1.0));
        let g = u.gradient(&x);
        let fd = central_gradient(|z| u.value(z), &x, 1e-5);
        let err = norm(&sub(&g, &fd)) / norm(&g).max(1.0);
        gerr = gerr.max(err);
    }
    PotentialProbe { midpoint_violation: mid, gradient_error: gerr }
}

/// Two-sided finite-difference gradient.
pub fn central_gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], step: f64) -> Vec<f64> {
    let mut z = x.to_vec();
    (0..x.len())
        .map(|i| {
            z[i] = x[i] + step;
            let up = f(&z);
            z[i] = x[i] - step;
            let dn = f(&z);
            z[i] = x[i];
            (up - dn) / (2.0 * step)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::{LinearPotential, QuadraticWeight};

    fn quad(n: usize) -> Arc<dyn ConvexPotential> {
        Arc::new(QuadraticWeight::new(n, 1.0))
    }

    #[test]
    fn quadratic_closed_form() {
        let u = quad(2);
        let r = prox(&*u, &[2.0, 0.0], 1.0, &ProxOptions::default()).unwrap();
        assert!((r.minimizer[0] + 1.0).abs() < 1e-12 && r.minimizer[1].abs() < 1e-12);
        assert!((r.envelope_value - 1.0).abs() < 1e-12);
        assert!((r.envelope_grad[0] - 1.0).abs() < 1e-12);
        assert!(r.envelope_value <= u.value(&[2.0, 0.0]));
    }

    #[test]
    fn linear_potential() {
        let b = vec![3.0, 4.0];
        let u = LinearPotential::new(b.clone());
        for x in [[0.0, 0.0], [1.0, -2.0]] {
            let r = prox(&u, &x, 0.1, &ProxOptions::default()).unwrap();
            assert!((r.minimizer[0] + 0.3).abs() < 1e-12);
            assert!((r.minimizer[1] + 0.4).abs() < 1e-12);
            assert!((r.envelope_grad[0] - 3.0).abs() < 1e-10);
            let want = dot(&b, &x) - 0.1 * 25.0 / 2.0;
            assert!((r.envelope_value - want).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_only_path_agrees_with_newton() {
        #[derive(Debug)]
        struct NoHess(QuadraticWeight);
        impl ConvexPotential for NoHess {
            fn dim(&self) -> usize {
                self.0.dim()
            }
            fn value(&self, x: &[f64]) -> f64 {
                self.0.value(x)
            }
            fn gradient(&self, x: &[f64]) -> Vec<f64> {
                self.0.gradient(x)
            }
        }
        let u = NoHess(QuadraticWeight::new(3, 2.0));
        let x = [1.0, -0.5, 2.0];
        let r = prox(&u, &x, 0.7, &ProxOptions::default()).unwrap();
        // P = −αc x/(1+αc) for U = c|x|²/2.
        for (p, xi) in r.minimizer.iter().zip(x) {
            assert!((p + 0.7 * 2.0 * xi / 2.4).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_and_minimizer_cases() {
        let u = quad(2);
        let r = prox(&*u, &[0.0, 0.0], 0.3, &ProxOptions::default()).unwrap();
        assert_eq!(r.minimizer, vec![0.0, 0.0]);
        assert_eq!(r.envelope_grad, vec![0.0, 0.0]);
    }

    #[test]
    fn semigroup_quadratic() {
        let u = quad(2);
        let (lhs, rhs) = semigroup_check(&u, &[2.0, 0.0], 0.5, 0.5, &ProxOptions::default()).unwrap();
        assert!((lhs - 1.0).abs() < 1e-9, "{lhs}");
        assert!((rhs - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_norms_quadratic() {
        let u = quad(2);
        let g = gradient_monotonicity_check(&*u, &[2.0, 0.0], 0.5, 0.5, &ProxOptions::default()).unwrap();
        assert!((g.fine - 2.0 / 1.5).abs() < 1e-10);
        assert!((g.coarse - 1.0).abs() < 1e-10);
        assert!(g.coarse <= g.fine && g.fine <= g.potential);
    }

    #[test]
    fn subgradient_identity_at_p() {
        let u = quad(2);
        let x = [1.5, -0.5];
        let p = prox(&*u, &x, 0.4, &ProxOptions::default()).unwrap();
        let v = subdifferential_inclusion_check(&*u, &x, 0.4, std::slice::from_ref(&p.minimizer), &ProxOptions::default()).unwrap();
        assert!(v.abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_alpha() {
        let u = quad(1);
        assert!(prox(&*u, &[1.0], 0.0, &ProxOptions::default()).is_err());
        assert!(prox(&*u, &[1.0], -1.0, &ProxOptions::default()).is_err());
    }
}
