//! Executable checks for the regularity estimates, the penalization limit,
//! the Neumann trace condition, integration by parts with traces and the
//! eigenvalue identities.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::domain_rules::{boundary_rule, domain_quadrature, penalized_quadrature};
use crate::domains::ConvexDomain;
use crate::error::{Error, Result};
use crate::hermite::{BasisEval, HermiteBasis};
use crate::linalg::{dot, norm};
use crate::model::{kl_eigenvalue, GaussianSampler, TruncatedModel};
use crate::parallel::{tree_reduce, CHUNK};
use crate::prox::ConvexPotential;
use crate::quadrature::{Estimate, QuadratureRule, RuleKind};
use crate::solver::{assemble, solve, Density, GalerkinSolution, HermiteExpansion};
use crate::weights::{PenalizedPotential, WeightMode};

/// Slack on the first two resolvent bounds for deterministic rules.
pub const DETERMINISTIC_SLACK: f64 = 1e-8;

/// Standard errors of the four norms (zero for deterministic rules).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NormStderr {
    pub u: f64,
    pub grad: f64,
    pub hess: f64,
    pub f: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SobolevReport {
    pub norm_u: f64,
    pub norm_grad: f64,
    pub norm_hess: f64,
    pub norm_f: f64,
    pub ratio_u: f64,
    pub ratio_grad: f64,
    pub ratio_hess: f64,
    pub lambda: f64,
    pub stochastic: bool,
    pub quadrature_stderr: NormStderr,
}

impl SobolevReport {
    fn ratio_stderr(ratio: f64, a: f64, sa: f64, b: f64, sb: f64) -> f64 {
        let rel = |v: f64, s: f64| if v > 0.0 { s / v } else { 0.0 };
        ratio * (rel(a, sa).powi(2) + rel(b, sb).powi(2)).sqrt()
    }

    /// Allowed excess of `ratio_u` and `ratio_grad` over 1.
    pub fn tolerances(&self) -> (f64, f64) {
        if !self.stochastic {
            return (DETERMINISTIC_SLACK, DETERMINISTIC_SLACK);
        }
        let s = self.quadrature_stderr;
        (
            3.0 * Self::ratio_stderr(self.ratio_u, self.norm_u, s.u, self.norm_f, s.f),
            3.0 * Self::ratio_stderr(self.ratio_grad, self.norm_grad, s.grad, self.norm_f, s.f),
        )
    }

    /// `ratio_u ≤ 1 + tol` and `ratio_grad ≤ 1 + tol`.
    pub fn first_bounds_hold(&self) -> bool {
        let (tu, tg) = self.tolerances();
        self.ratio_u <= 1.0 + tu && self.ratio_grad <= 1.0 + tg
    }
}

/// `(Σ w g, Σ w g²)` per component over the nodes of `rule`.
fn weighted_sums<const K: usize, G>(rule: &QuadratureRule, g: G) -> Result<[(f64, f64); K]>
where
    G: Fn(&[f64], &mut BasisEval) -> [f64; K] + Sync,
    [(f64, f64); K]: Send,
{
    let parts: Vec<[(f64, f64); K]> = (0..rule.len())
        .into_par_iter()
        .chunks(CHUNK)
        .map_init(BasisEval::default, |ev, idx| {
            let mut acc = [(0.0, 0.0); K];
            for i in idx {
                let w = rule.weight(i);
                let v = g(rule.node(i), ev);
                for (a, vi) in acc.iter_mut().zip(v) {
                    a.0 += w * vi;
                    a.1 += w * vi * vi;
                }
            }
            acc
        })
        .collect();
    let total = tree_reduce(parts, |mut a, b| {
        for (x, y) in a.iter_mut().zip(b) {
            x.0 += y.0;
            x.1 += y.1;
        }
        a
    })
    .unwrap_or([(0.0, 0.0); K]);
    if let Some(bad) = total.iter().position(|(s, _)| !s.is_finite()) {
        return Err(Error::NonFinite(format!("quadrature sum {bad} is not finite")));
    }
    Ok(total)
}

fn norm_and_stderr(rule: &QuadratureRule, sums: (f64, f64)) -> (f64, f64) {
    let sq = sums.0.max(0.0);
    let value = sq.sqrt();
    let se_sq = rule.stderr_from_sums(sums.0, sums.1);
    let se = if value > 0.0 { se_sq / (2.0 * value) } else { se_sq.sqrt() };
    (value, se)
}

/// L²(ν) norms of `u`, `∇u`, `∇²u` (Hilbert–Schmidt) and `f` with `rule`.
pub fn sobolev_report<F>(sol: &GalerkinSolution, density: &Density, f: F, rule: &QuadratureRule) -> Result<SobolevReport>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if sol.weight_kind != density.kind() {
        return Err(Error::Validation(format!(
            "solution was computed for a {:?} measure but the report was requested for {:?}",
            sol.weight_kind,
            density.kind()
        )));
    }
    if rule.dim() != sol.basis().dim() {
        return Err(Error::DimensionMismatch { expected: sol.basis().dim(), found: rule.dim() });
    }
    let sums = weighted_sums::<4, _>(rule, |x, ev| {
        let w = density.weight_at(x);
        if w == 0.0 {
            return [0.0; 4];
        }
        let e = sol.expansion.evaluate_with(x, 2, ev);
        let g = e.gradient.unwrap();
        let h = e.hessian.unwrap();
        let fx = f(x);
        [w * e.value * e.value, w * dot(&g, &g), w * h.norm_squared(), w * fx * fx]
    })?;
    let (norm_u, su) = norm_and_stderr(rule, sums[0]);
    let (norm_grad, sg) = norm_and_stderr(rule, sums[1]);
    let (norm_hess, sh) = norm_and_stderr(rule, sums[2]);
    let (norm_f, sf) = norm_and_stderr(rule, sums[3]);
    let lambda = sol.lambda;
    let div = |a: f64| if norm_f > 0.0 { a / norm_f } else { 0.0 };
    Ok(SobolevReport {
        norm_u,
        norm_grad,
        norm_hess,
        norm_f,
        ratio_u: div(lambda * norm_u),
        ratio_grad: div(lambda.sqrt() * norm_grad),
        ratio_hess: div(norm_hess / 2f64.sqrt()),
        lambda,
        stochastic: rule.is_stochastic(),
        quadrature_stderr: NormStderr { u: su, grad: sg, hess: sh, f: sf },
    })
}

/// Kind and resolution of a quadrature rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RuleSpec {
    pub kind: RuleKind,
    pub resolution: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    pub degree: usize,
    pub domain_rule: RuleSpec,
    pub penalized_rule: RuleSpec,
    pub mode: WeightMode,
}

#[derive(Debug, Clone)]
pub struct PenalizationSweep {
    pub alphas: Vec<f64>,
    pub distances: Vec<f64>,
    pub reports: Vec<SobolevReport>,
    pub direct: GalerkinSolution,
    pub direct_report: SobolevReport,
}

impl PenalizationSweep {
    /// Last distance does not exceed the first.
    pub fn contract_holds(&self) -> bool {
        match (self.distances.first(), self.distances.last()) {
            (Some(a), Some(b)) => b <= a,
            _ => true,
        }
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.distances.windows(2).all(|w| w[1] < w[0])
    }

    /// Least-squares slope of `log distance` against `log α`.
    pub fn empirical_rate(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .alphas
            .iter()
            .zip(&self.distances)
            .filter(|(_, d)| **d > 0.0)
            .map(|(a, d)| (a.ln(), d.ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let m = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
        let (mx, my) = (sx / m, sy / m);
        let (num, den) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx).powi(2)));
        (den > 0.0).then(|| num / den)
    }
}

fn check_alphas(alphas: &[f64]) -> Result<()> {
    if alphas.is_empty() || alphas.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
        return Err(Error::InvalidInput("α grid must be non-empty with positive finite entries".into()));
    }
    if alphas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput("α grid must be strictly decreasing".into()));
    }
    Ok(())
}

/// Whole-space solves with `e^{−V_α}` compared with the direct solve on Ω.
#[allow(clippy::too_many_arguments)]
pub fn penalization_sweep<F>(
    model: &TruncatedModel,
    potential: Arc<dyn ConvexPotential>,
    domain: Arc<dyn ConvexDomain>,
    f: F,
    lambda: f64,
    alphas: &[f64],
    cfg: &SweepConfig,
) -> Result<PenalizationSweep>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    check_alphas(alphas)?;
    let basis = HermiteBasis::new(model.dim(), cfg.degree)?;
    let omega_rule = domain_quadrature(model, &*domain, cfg.domain_rule.kind, cfg.domain_rule.resolution)?;
    let omega = Density::on_domain(potential.clone(), domain.clone())?;
    let direct = solve(&assemble(&basis, &omega, &f, lambda, &omega_rule)?)?;
    let direct_report = sobolev_report(&direct, &omega, &f, &omega_rule)?;
    let runs: Vec<Result<(f64, SobolevReport)>> = alphas
        .par_iter()
        .map(|&alpha| {
            let run = || -> Result<(f64, SobolevReport)> {
                let v = PenalizedPotential::new(potential.clone(), domain.clone(), alpha, cfg.mode)?;
                let dens = Density::whole_space(Arc::new(v));
                let rule = penalized_quadrature(model, &*domain, alpha, cfg.penalized_rule.kind, cfg.penalized_rule.resolution)?;
                let sol = solve(&assemble(&basis, &dens, &f, lambda, &rule)?)?;
                let report = sobolev_report(&sol, &dens, &f, &rule)?;
                let diff: Vec<f64> = sol.coeffs().iter().zip(direct.coeffs()).map(|(a, b)| a - b).collect();
                let diff = HermiteExpansion::new(basis.clone(), diff)?;
                let [(sq, _)] = weighted_sums::<1, _>(&omega_rule, |x, ev| {
                    let w = omega.weight_at(x);
                    if w == 0.0 {
                        return [0.0];
                    }
                    let d = diff.evaluate_with(x, 0, ev).value;
                    [w * d * d]
                })?;
                Ok((sq.max(0.0).sqrt(), report))
            };
            run().map_err(|e| e.annotate(format!("penalized solve at α = {alpha}")))
        })
        .collect();
    let mut distances = Vec::with_capacity(alphas.len());
    let mut reports = Vec::with_capacity(alphas.len());
    for r in runs {
        let (d, rep) = r?;
        distances.push(d);
        reports.push(rep);
    }
    Ok(PenalizationSweep { alphas: alphas.to_vec(), distances, reports, direct, direct_report })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeumannReport {
    pub residual: f64,
    pub boundary_rule: String,
    pub degree_series: Vec<(usize, f64)>,
}

impl NeumannReport {
    /// Nonincreasing after the first entry.
    pub fn monotone(&self) -> bool {
        self.degree_series.windows(2).all(|w| w[1].1 <= w[0].1)
    }
}

fn describe(rule: &QuadratureRule, domain: &dyn ConvexDomain, resolution: usize) -> String {
    format!("{} on {} boundary, resolution {resolution}, {} nodes", rule.kind().name(), domain.kind_name(), rule.len())
}

/// `(∫_{G=0} ⟨∇u, ∇G/|∇G|⟩² e^{−U} dρ)^{1/2}`.
pub fn neumann_residual(
    sol: &GalerkinSolution,
    domain: &dyn ConvexDomain,
    potential: &dyn ConvexPotential,
    boundary_resolution: usize,
) -> Result<NeumannReport> {
    let rule = boundary_rule(domain, boundary_resolution)?;
    let [(sq, _)] = weighted_sums::<1, _>(&rule, |x, ev| {
        let g = domain.g_grad(x);
        let gn = norm(&g);
        let du = sol.expansion.evaluate_with(x, 1, ev).gradient.unwrap();
        let flux = dot(&du, &g) / gn;
        let w = if potential.is_zero() { 1.0 } else { (-potential.value(x)).exp() };
        [w * flux * flux]
    })?;
    let residual = sq.max(0.0).sqrt();
    Ok(NeumannReport { residual, boundary_rule: describe(&rule, domain, boundary_resolution), degree_series: Vec::new() })
}

/// Direct domain solves over `degrees` with their Neumann residuals.
#[allow(clippy::too_many_arguments)]
pub fn neumann_series<F>(
    model: &TruncatedModel,
    potential: Arc<dyn ConvexPotential>,
    domain: Arc<dyn ConvexDomain>,
    f: F,
    lambda: f64,
    degrees: &[usize],
    volume: RuleSpec,
    boundary_resolution: usize,
) -> Result<NeumannReport>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if degrees.is_empty() {
        return Err(Error::InvalidInput("degree series is empty".into()));
    }
    let rule = domain_quadrature(model, &*domain, volume.kind, volume.resolution)?;
    let density = Density::on_domain(potential.clone(), domain.clone())?;
    let mut series = Vec::with_capacity(degrees.len());
    let mut last = None;
    for &d in degrees {
        let basis = HermiteBasis::new(model.dim(), d)?;
        let sol = solve(&assemble(&basis, &density, &f, lambda, &rule)?).map_err(|e| e.annotate(format!("degree {d}")))?;
        let rep = neumann_residual(&sol, &*domain, &*potential, boundary_resolution)?;
        series.push((d, rep.residual));
        last = Some(rep);
    }
    let mut rep = last.expect("non-empty series");
    rep.degree_series = series;
    Ok(rep)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IbpResult {
    pub lhs: Estimate,
    pub rhs: Estimate,
}

impl IbpResult {
    pub fn abs_diff(&self) -> f64 {
        (self.lhs.value - self.rhs.value).abs()
    }

    pub fn stderr(&self) -> f64 {
        self.lhs.stderr.hypot(self.rhs.stderr)
    }

    /// `|lhs − rhs| ≤ max(1e−8, 3·stderr)`.
    pub fn agrees(&self) -> bool {
        self.abs_diff() <= (1e-8f64).max(3.0 * self.stderr())
    }
}

/// Both sides of `∫_Ω(∂_kφ − φ∂_kU − φx_k) e^{−U}dγ = ∫_{G=0} φ ∂_kG/|∇G| e^{−U} dρ`
/// for the zero-based axis `k`.
pub fn ibp_check(
    potential: &dyn ConvexPotential,
    domain: &dyn ConvexDomain,
    phi: &HermiteExpansion,
    k: usize,
    volume: &QuadratureRule,
    boundary: &QuadratureRule,
) -> Result<IbpResult> {
    let n = domain.dim();
    if k >= n {
        return Err(Error::IndexOutOfRange { index: k, len: n });
    }
    if phi.dim() != n || volume.dim() != n || boundary.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: phi.dim() });
    }
    let weight = |x: &[f64]| if potential.is_zero() { 1.0 } else { (-potential.value(x)).exp() };
    let lhs = weighted_sums::<1, _>(volume, |x, ev| {
        if domain.g_value(x) > crate::solver::MEMBERSHIP_SLACK {
            return [0.0];
        }
        let e = phi.evaluate_with(x, 1, ev);
        let dku = if potential.is_zero() { 0.0 } else { potential.gradient(x)[k] };
        [weight(x) * (e.gradient.unwrap()[k] - e.value * dku - e.value * x[k])]
    })?[0];
    let rhs = weighted_sums::<1, _>(boundary, |x, ev| {
        let g = domain.g_grad(x);
        let e = phi.evaluate_with(x, 0, ev);
        [weight(x) * e.value * g[k] / norm(&g)]
    })?[0];
    Ok(IbpResult {
        lhs: Estimate { value: lhs.0, stderr: volume.stderr_from_sums(lhs.0, lhs.1) },
        rhs: Estimate { value: rhs.0, stderr: boundary.stderr_from_sums(rhs.0, rhs.1) },
    })
}

/// Random Hermite expansion of total degree ≤ `degree` with coefficients
/// decaying like `2^{−|k|}`.
pub fn random_test_function(n: usize, degree: usize, sampler: &mut GaussianSampler) -> Result<HermiteExpansion> {
    let basis = HermiteBasis::new(n, degree)?;
    let coeffs = basis
        .indices()
        .iter()
        .map(|k| sampler.next_scalar() * 0.5f64.powi(k.iter().sum::<usize>() as i32))
        .collect();
    HermiteExpansion::new(basis, coeffs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaSums {
    pub terms: usize,
    /// `Σ_{i≤K} λ_i²`.
    pub partial: f64,
    /// `16/(3π⁴(2K−1)³)`, an upper bound for the omitted tail.
    pub tail_bound: f64,
    /// `4 Σ_{i≤K} λ_i²`, the Frobenius square of `∇²G` for the ellipsoid functional.
    pub frobenius: f64,
}

impl LambdaSums {
    /// `partial ≤ 1/6 ≤ partial + tail_bound`.
    pub fn consistent(&self) -> bool {
        let target = 1.0 / 6.0;
        self.partial <= target + 1e-15 && target <= self.partial + self.tail_bound + 1e-15
    }
}

pub fn lambda_sum_check(k: usize) -> Result<LambdaSums> {
    if k == 0 {
        return Err(Error::InvalidInput("number of terms must be ≥ 1".into()));
    }
    // summing the small terms first
    let partial: f64 = (1..=k).rev().map(|i| kl_eigenvalue(i).powi(2)).sum();
    let m = (2 * k - 1) as f64;
    let tail_bound = 16.0 / (3.0 * std::f64::consts::PI.powi(4) * m.powi(3));
    Ok(LambdaSums { terms: k, partial, tail_bound, frobenius: 4.0 * partial })
}

/// Floats in output tables: 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_sweep_csv<W: Write>(out: W, sweep: &PenalizationSweep) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["alpha", "distance", "ratio_u", "ratio_grad", "ratio_hess"])?;
    for ((a, d), r) in sweep.alphas.iter().zip(&sweep.distances).zip(&sweep.reports) {
        w.write_record([fmt_float(*a), fmt_float(*d), fmt_float(r.ratio_u), fmt_float(r.ratio_grad), fmt_float(r.ratio_hess)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_neumann_csv<W: Write>(out: W, report: &NeumannReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["degree", "residual"])?;
    for (d, r) in &report.degree_series {
        w.write_record([d.to_string(), fmt_float(*r)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_ibp_csv<W: Write>(out: W, rows: &[(String, IbpResult)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["config_id", "lhs", "rhs", "abs_diff", "stderr"])?;
    for (id, r) in rows {
        w.write_record([
            id.clone(),
            fmt_float(r.lhs.value),
            fmt_float(r.rhs.value),
            fmt_float(r.abs_diff()),
            fmt_float(r.stderr()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain_rules::{boundary_rule, domain_quadrature};
    use crate::domains::{HalfspaceDomain, WholeSpace};
    use crate::hermite::hermite;
    use crate::quadrature::build_quadrature;
    use crate::weights::ZeroWeight;

    fn zero(n: usize) -> Arc<dyn ConvexPotential> {
        Arc::new(ZeroWeight::new(n))
    }

    #[test]
    fn ou_report() {
        let model = TruncatedModel::new(1, 0).unwrap();
        let rule = build_quadrature(&model, RuleKind::TensorGaussHermite, 20).unwrap();
        let d = Density::whole_space(zero(1));
        let f = |x: &[f64]| x[0];
        let sol = solve(&assemble(&HermiteBasis::new(1, 4).unwrap(), &d, f, 1.0, &rule).unwrap()).unwrap();
        let r = sobolev_report(&sol, &d, f, &rule).unwrap();
        assert!((r.norm_u - 0.5).abs() < 1e-12);
        assert!((r.norm_grad - 0.5).abs() < 1e-12);
        assert!((r.norm_f - 1.0).abs() < 1e-12);
        assert!((r.ratio_u - 0.5).abs() < 1e-12 && (r.ratio_grad - 0.5).abs() < 1e-12);
        assert!(r.first_bounds_hold());
        for &lam in &[10.0, 100.0] {
            let sol = solve(&assemble(&HermiteBasis::new(1, 4).unwrap(), &d, f, lam, &rule).unwrap()).unwrap();
            let r = sobolev_report(&sol, &d, f, &rule).unwrap();
            assert!((r.ratio_u - lam / (lam + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_saturates_first_bound() {
        let model = TruncatedModel::new(2, 0).unwrap();
        let rule = build_quadrature(&model, RuleKind::TensorGaussHermite, 8).unwrap();
        let d = Density::whole_space(Arc::new(crate::weights::QuadraticWeight::new(2, 1.0)));
        let sol = solve(&assemble(&HermiteBasis::new(2, 3).unwrap(), &d, |_| 3.0, 2.0, &rule).unwrap()).unwrap();
        let r = sobolev_report(&sol, &d, |_| 3.0, &rule).unwrap();
        assert!((r.ratio_u - 1.0).abs() < 1e-10);
        assert!(r.ratio_grad < 1e-9 && r.ratio_hess < 1e-9);
    }

    #[test]
    fn measure_mismatch_is_rejected() {
        let model = TruncatedModel::new(1, 0).unwrap();
        let rule = build_quadrature(&model, RuleKind::TensorGaussHermite, 8).unwrap();
        let d = Density::whole_space(zero(1));
        let sol = solve(&assemble(&HermiteBasis::new(1, 2).unwrap(), &d, |_| 1.0, 1.0, &rule).unwrap()).unwrap();
        let h: Arc<dyn ConvexDomain> = Arc::new(HalfspaceDomain::new(vec![1.0], 0.0).unwrap());
        let other = Density::on_domain(zero(1), h).unwrap();
        assert!(matches!(sobolev_report(&sol, &other, |_| 1.0, &rule), Err(Error::Validation(_))));
    }

    fn cfg(degree: usize) -> SweepConfig {
        SweepConfig {
            degree,
            domain_rule: RuleSpec { kind: RuleKind::HalfspaceGauss, resolution: 30 },
            penalized_rule: RuleSpec { kind: RuleKind::PenalizedSplit, resolution: 30 },
            mode: WeightMode::Envelope,
        }
    }

    #[test]
    fn sweep_trivial_cases() {
        let model = TruncatedModel::new(1, 0).unwrap();
        let whole: Arc<dyn ConvexDomain> = Arc::new(WholeSpace::new(1));
        let c = SweepConfig {
            domain_rule: RuleSpec { kind: RuleKind::TensorGaussHermite, resolution: 20 },
            penalized_rule: RuleSpec { kind: RuleKind::TensorGaussHermite, resolution: 20 },
            ..cfg(6)
        };
        let s = penalization_sweep(&model, zero(1), whole, |x: &[f64]| x[0], 1.0, &[1.0, 0.1, 0.01], &c).unwrap();
        assert!(s.distances.iter().all(|d| *d <= 1e-9));
        let h: Arc<dyn ConvexDomain> = Arc::new(HalfspaceDomain::new(vec![1.0], 0.0).unwrap());
        let s = penalization_sweep(&model, zero(1), h.clone(), |_| 2.0, 1.0, &[1.0, 0.1, 0.01], &cfg(6)).unwrap();
        assert!(s.distances.iter().all(|d| *d <= 1e-9));
        let s = penalization_sweep(&model, zero(1), h, |x: &[f64]| x[0], 1.0, &[1.0, 0.1, 0.01], &cfg(10)).unwrap();
        assert!(s.strictly_decreasing(), "{:?}", s.distances);
        assert!(s.contract_holds());
        assert!(s.empirical_rate().unwrap() > 0.0);
    }

    #[test]
    fn sweep_rejects_bad_grid() {
        let model = TruncatedModel::new(1, 0).unwrap();
        let h: Arc<dyn ConvexDomain> = Arc::new(HalfspaceDomain::new(vec![1.0], 0.0).unwrap());
        assert!(penalization_sweep(&model, zero(1), h, |_| 1.0, 1.0, &[0.1, 1.0], &cfg(2)).is_err());
    }

    #[test]
    fn neumann_point_boundary() {
        let model = TruncatedModel::new(1, 0).unwrap();
        let h: Arc<dyn ConvexDomain> = Arc::new(HalfspaceDomain::new(vec![1.0], 0.0).unwrap());
        let rule = domain_quadrature(&model, &*h, RuleKind::HalfspaceGauss, 30).unwrap();
        let d = Density::on_domain(zero(1), h.clone()).unwrap();
        let sol = solve(&assemble(&HermiteBasis::new(1, 4).unwrap(), &d, |x: &[f64]| x[0], 1.0, &rule).unwrap()).unwrap();
        let du0 = sol.evaluate(&[0.0], 1).gradient.unwrap()[0];
        let rep = neumann_residual(&sol, &*h, &ZeroWeight::new(1), 8).unwrap();
        let want = (du0 * du0 / (2.0 * std::f64::consts::PI).sqrt()).sqrt();
        assert!((rep.residual - want).abs() < 1e-15);
        let c = solve(&assemble(&HermiteBasis::new(1, 4).unwrap(), &d, |_| 1.0, 1.0, &rule).unwrap()).unwrap();
        assert!(neumann_residual(&c, &*h, &ZeroWeight::new(1), 8).unwrap().residual < 1e-12);
        let series = neumann_series(
            &model,
            zero(1),
            h,
            |x: &[f64]| x[0],
            1.0,
            &[4, 8, 12],
            RuleSpec { kind: RuleKind::HalfspaceGauss, resolution: 40 },
            8,
        )
        .unwrap();
        assert!(series.degree_series.windows(2).all(|w| w[1].1 < w[0].1));
        assert!(neumann_residual(&sol, &WholeSpace::new(1), &ZeroWeight::new(1), 8).is_err());
    }

    #[test]
    fn ibp_closed_forms() {
        let model = TruncatedModel::new(1, 0).unwrap();
        let h = HalfspaceDomain::new(vec![1.0], 0.0).unwrap();
        let vol = domain_quadrature(&model, &h, RuleKind::HalfspaceGauss, 20).unwrap();
        let bd = boundary_rule(&h, 4).unwrap();
        let one = HermiteExpansion::basis_function(HermiteBasis::new(1, 0).unwrap(), &[0]).unwrap();
        let r = ibp_check(&ZeroWeight::new(1), &h, &one, 0, &vol, &bd).unwrap();
        let g0 = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((r.lhs.value - g0).abs() < 1e-10 && (r.rhs.value - g0).abs() < 1e-10);
        let nil = HermiteExpansion::new(HermiteBasis::new(1, 1).unwrap(), vec![0.0, 0.0]).unwrap();
        let r = ibp_check(&ZeroWeight::new(1), &h, &nil, 0, &vol, &bd).unwrap();
        assert_eq!((r.lhs.value, r.rhs.value), (0.0, 0.0));

        let model = TruncatedModel::new(2, 0).unwrap();
        let h = HalfspaceDomain::new(vec![1.0, 0.0], 0.0).unwrap();
        let vol = domain_quadrature(&model, &h, RuleKind::HalfspaceGauss, 20).unwrap();
        let bd = boundary_rule(&h, 10).unwrap();
        let x2 = HermiteExpansion::basis_function(HermiteBasis::new(2, 1).unwrap(), &[0, 1]).unwrap();
        let r = ibp_check(&ZeroWeight::new(2), &h, &x2, 0, &vol, &bd).unwrap();
        assert!(r.lhs.value.abs() < 1e-15 && r.rhs.value.abs() < 1e-15);
        assert!(r.agrees());
        assert_eq!(hermite(1, 0.5), 0.5);
    }

    #[test]
    fn lambda_sums() {
        let one = lambda_sum_check(1).unwrap();
        assert!((one.partial - 16.0 / std::f64::consts::PI.powi(4)).abs() < 1e-15);
        assert!((one.partial - 0.164255).abs() < 1e-6);
        let s = lambda_sum_check(100).unwrap();
        assert!((s.partial - 1.0 / 6.0).abs() < 6e-7);
        assert!(s.consistent());
        assert!((lambda_sum_check(100_000).unwrap().frobenius - 2.0 / 3.0).abs() < 1e-12);
        assert!(lambda_sum_check(0).is_err());
    }

    #[test]
    fn float_format_round_trips() {
        for &x in &[0.1, 1.0 / 3.0, -2.5e-17, 6.02214076e23] {
            let s = fmt_float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_float(0.5), "5.0000000000000000e-1");
    }
}
