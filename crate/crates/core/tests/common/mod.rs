//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use rayon::prelude::*;
use wgm::domains::{ConvexDomain, EllipsoidDomain, HalfspaceDomain, WholeSpace};
use wgm::prox::ConvexPotential;
use wgm::weights::{Growth, QuadraticWeight, ScalarConvex, WeightU1, ZeroWeight};
use wgm::TruncatedModel;

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

pub fn gamma1(x: f64) -> f64 {
    (-0.5 * x * x).exp() / TWO_PI.sqrt()
}

/// Reflected finite-volume solve of `λu − u″ + xu′ = f` on `[a, b]`, written in
/// flux form `λu − γ⁻¹(γu′)′ = f`. Returns nodes, values and the γ-weighted
/// control-volume sizes (a trapezoid rule for `∫ · γ dx`).
pub struct FdSolution {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub vol: Vec<f64>,
}

pub fn fd_reflected(lambda: f64, f: impl Fn(f64) -> f64, a: f64, b: f64, h: f64) -> FdSolution {
    let n = ((b - a) / h).round() as usize;
    let h = (b - a) / n as f64;
    let x: Vec<f64> = (0..=n).map(|i| a + i as f64 * h).collect();
    let vol: Vec<f64> = (0..=n)
        .map(|i| {
            let half = if i == 0 || i == n { 0.5 } else { 1.0 };
            half * h * gamma1(x[i])
        })
        .collect();
    // face conductances γ(x_{i+1/2})/h
    let k: Vec<f64> = (0..n).map(|i| gamma1(x[i] + 0.5 * h) / h).collect();
    let mut diag = vec![0.0; n + 1];
    let mut off = vec![0.0; n];
    let mut rhs = vec![0.0; n + 1];
    for i in 0..=n {
        diag[i] = lambda * vol[i];
        rhs[i] = f(x[i]) * vol[i];
    }
    for i in 0..n {
        diag[i] += k[i];
        diag[i + 1] += k[i];
        off[i] = -k[i];
    }
    // Thomas algorithm
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n + 1];
    c[0] = off[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..=n {
        let m = diag[i] - off[i - 1] * c[i - 1];
        if i < n {
            c[i] = off[i] / m;
        }
        d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / m;
    }
    let mut u = d;
    for i in (0..n).rev() {
        u[i] -= c[i] * u[i + 1];
    }
    FdSolution { x, u, vol }
}

/// Brute-force prox: minimize `U(x+h) + |h|²/(2α)` over a grid of step `step`
/// covering the ball of radius `radius` around `−α∇U(x)`. n ∈ {1, 2}.
pub fn grid_prox(u: &dyn ConvexPotential, x: &[f64], alpha: f64, radius: f64, step: f64) -> (Vec<f64>, f64) {
    let g = u.gradient(x);
    let c: Vec<f64> = g.iter().map(|v| -alpha * v).collect();
    let m = (radius / step).floor() as i64;
    let obj = |h: &[f64]| {
        let z: Vec<f64> = x.iter().zip(h).map(|(a, b)| a + b).collect();
        u.value(&z) + h.iter().map(|v| v * v).sum::<f64>() / (2.0 * alpha)
    };
    match x.len() {
        1 => {
            let mut best = (vec![c[0]], obj(&c));
            for i in -m..=m {
                let h = [c[0] + i as f64 * step];
                let v = obj(&h);
                if v < best.1 {
                    best = (h.to_vec(), v);
                }
            }
            best
        }
        2 => (-m..=m)
            .into_par_iter()
            .map(|i| {
                let hx = c[0] + i as f64 * step;
                let mut best = (vec![c[0], c[1]], f64::INFINITY);
                let r2 = radius * radius - (i as f64 * step).powi(2);
                let mj = (r2.max(0.0).sqrt() / step).floor() as i64;
                for j in -mj..=mj {
                    let h = [hx, c[1] + j as f64 * step];
                    let v = obj(&h);
                    if v < best.1 {
                        best = (h.to_vec(), v);
                    }
                }
                best
            })
            .reduce(|| (vec![0.0, 0.0], f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a }),
        n => panic!("grid prox supports n ≤ 2, got {n}"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightChoice {
    Zero,
    Quadratic,
    U1Cosh,
}

impl WeightChoice {
    pub const ALL: [WeightChoice; 3] = [WeightChoice::Zero, WeightChoice::Quadratic, WeightChoice::U1Cosh];

    pub fn build(self, model: &TruncatedModel) -> Arc<dyn ConvexPotential> {
        let n = model.dim();
        match self {
            WeightChoice::Zero => Arc::new(ZeroWeight::new(n)),
            WeightChoice::Quadratic => Arc::new(QuadraticWeight::new(n, 1.0)),
            WeightChoice::U1Cosh => Arc::new(
                WeightU1::new(model, ScalarConvex::Cosh, WeightU1::uniform_tau(64), Growth { c: 1.0, beta: 1.0 }).unwrap(),
            ),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WeightChoice::Zero => "zero",
            WeightChoice::Quadratic => "quadratic",
            WeightChoice::U1Cosh => "u1-cosh",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainChoice {
    Whole,
    Halfspace,
    Ellipsoid,
}

impl DomainChoice {
    pub const ALL: [DomainChoice; 3] = [DomainChoice::Whole, DomainChoice::Halfspace, DomainChoice::Ellipsoid];

    /// Halfspace `{f(1) ≤ 0.3}` built from the Dirac mass at ξ = 1; ellipsoid
    /// `{∫f² ≤ 1}`.
    pub fn build(self, model: &TruncatedModel) -> Arc<dyn ConvexDomain> {
        match self {
            DomainChoice::Whole => Arc::new(WholeSpace::new(model.dim())),
            DomainChoice::Halfspace => Arc::new(HalfspaceDomain::from_measure(model, &[(1.0, 1.0)], 0.3).unwrap()),
            DomainChoice::Ellipsoid => Arc::new(EllipsoidDomain::for_model(model, 1.0).unwrap()),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DomainChoice::Whole => "none",
            DomainChoice::Halfspace => "halfspace",
            DomainChoice::Ellipsoid => "ellipsoid",
        }
    }
}

/// Smooth, non-polynomial right-hand side used by the bound checks.
pub fn test_rhs(x: &[f64]) -> f64 {
    let mut v = 1.0 + x[0];
    if x.len() > 1 {
        v += 0.5 * x[0] * x[1];
    }
    if let Some(z) = x.get(2) {
        v += 0.25 * z.sin();
    }
    v
}
