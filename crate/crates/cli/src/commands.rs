//! Command implementations. Each returns a [`Summary`] whose criteria decide
//! the exit status.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::json;
use thiserror::Error;
use wgm::domain_rules::{boundary_rule, domain_quadrature, penalized_quadrature};
use wgm::domains::{distance_sq, grad_distance_sq, lipschitz_probe, project_certified, sample_domain, VI_SAMPLES};
use wgm::linalg::{dot, norm, sub};
use wgm::prox::{central_gradient, envelope_value, gradient_monotonicity_check, prox, semigroup_check, ProxOptions};
use wgm::quadrature::{build_quadrature, QuadratureRule, RuleKind};
use wgm::solver::{assemble, solve, Density};
use wgm::verify::{
    fmt_float, ibp_check, lambda_sum_check, neumann_series, penalization_sweep, random_test_function, sobolev_report,
    write_ibp_csv, write_neumann_csv, write_sweep_csv, RuleSpec, SweepConfig,
};
use wgm::weights::{Growth, PenalizedPotential, PsiKind, QuadraticWeight, ScalarConvex, WeightU1, WeightU2, ZeroWeight};
use wgm::{ConvexDomain, ConvexPotential, EllipsoidDomain, HalfspaceDomain, HermiteBasis, TruncatedModel};

use crate::config::{ConfigError, DomainKind, RunConfig, SolveMode, WeightKind};
use crate::report::{Check, Criterion, Summary};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] wgm::Error),
    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// Input errors exit with 1, numerical failures with 2.
    pub fn is_input(&self) -> bool {
        fn core(e: &wgm::Error) -> bool {
            use wgm::Error::*;
            match e {
                InvalidInput(_) | IndexOutOfRange { .. } | DimensionMismatch { .. } | NodeBudget { .. } | Unsupported(_)
                | Io(_) | Csv(_) => true,
                Annotated { source, .. } => core(source),
                _ => false,
            }
        }
        match self {
            CliError::Core(e) => core(e),
            _ => true,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    PenalizeSweep,
    ProxCheck,
    ProjectCheck,
    NeumannCheck,
    IbpCheck,
    Identities,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::PenalizeSweep => "penalize-sweep",
            Command::ProxCheck => "prox-check",
            Command::ProjectCheck => "project-check",
            Command::NeumannCheck => "neumann-check",
            Command::IbpCheck => "ibp-check",
            Command::Identities => "identities",
        }
    }
}

pub struct Context {
    pub cfg: RunConfig,
    pub model: TruncatedModel,
    pub out: PathBuf,
}

impl Context {
    pub fn new(cfg: RunConfig, out: Option<PathBuf>) -> Result<Self> {
        let model = TruncatedModel::new(cfg.model.n, cfg.model.seed)?;
        let out = out.unwrap_or_else(|| cfg.output.dir.clone());
        std::fs::create_dir_all(&out).map_err(|source| CliError::Output { path: out.clone(), source })?;
        Ok(Self { cfg, model, out })
    }

    fn domain(&self) -> Result<Option<Arc<dyn ConvexDomain>>> {
        let d = &self.cfg.domain;
        Ok(match d.kind {
            DomainKind::None => None,
            DomainKind::Halfspace => Some(Arc::new(HalfspaceDomain::from_measure(&self.model, &d.sigma, d.c)?)),
            DomainKind::Ellipsoid => Some(Arc::new(EllipsoidDomain::for_model(&self.model, d.r)?)),
        })
    }

    fn require_domain(&self, cmd: Command) -> Result<Arc<dyn ConvexDomain>> {
        self.domain()?.ok_or_else(|| {
            CliError::Input(format!("`{}` needs domain.kind set to halfspace or ellipsoid", cmd.name()))
        })
    }

    fn weight(&self) -> Result<Arc<dyn ConvexPotential>> {
        let w = &self.cfg.weight;
        let n = self.model.dim();
        let growth = |g: Growth| w.growth.map(|(c, beta)| Growth { c, beta }).unwrap_or(g);
        Ok(match w.kind {
            WeightKind::Zero => Arc::new(ZeroWeight::new(n)),
            WeightKind::Quadratic => Arc::new(QuadraticWeight::new(n, w.scale)),
            WeightKind::U1 => {
                let tau = w.tau.clone().unwrap_or_else(|| WeightU1::uniform_tau(w.tau_nodes));
                Arc::new(WeightU1::new(&self.model, w.phi, tau, growth(w.phi.default_growth()))?)
            }
            WeightKind::U2 => {
                let profile = match w.psi {
                    PsiKind::Square => ScalarConvex::Square,
                    PsiKind::Cosh => ScalarConvex::Cosh,
                };
                Arc::new(WeightU2::new(&self.model, w.psi, w.xi_nodes, growth(profile.default_growth()))?)
            }
        })
    }

    fn rhs(&self) -> Result<wgm::solver::HermiteExpansion> {
        let terms = &self.cfg.solver.rhs;
        let degree = terms.iter().map(|(k, _)| k.iter().sum::<usize>()).max().unwrap_or(0);
        let basis = HermiteBasis::new(self.model.dim(), degree)?;
        let mut coeffs = vec![0.0; basis.len()];
        for (k, c) in terms {
            let i = basis.position(k).expect("index within its own degree");
            coeffs[i] += c;
        }
        Ok(wgm::solver::HermiteExpansion::new(basis, coeffs)?)
    }

    /// Volume rule for `spec` on Ω, or on the whole space when there is no domain.
    fn volume_rule(&self, domain: Option<&dyn ConvexDomain>, spec: RuleSpec) -> Result<QuadratureRule> {
        Ok(match domain {
            None => build_quadrature(&self.model, spec.kind, spec.resolution)?,
            Some(d) => domain_quadrature(&self.model, d, spec.kind, spec.resolution)?,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn create(&self, name: &str, summary: &mut Summary) -> Result<BufWriter<File>> {
        let path = self.path(name);
        summary.artifacts.push(name.to_string());
        File::create(&path).map(BufWriter::new).map_err(|source| CliError::Output { path, source })
    }
}

fn csv_writer(w: BufWriter<File>) -> csv::Writer<BufWriter<File>> {
    csv::Writer::from_writer(w)
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Output { path: path.to_path_buf(), source: e.into() }
}

pub fn run(cmd: Command, ctx: &Context) -> Result<Summary> {
    match cmd {
        Command::Solve => solve_cmd(ctx),
        Command::PenalizeSweep => sweep_cmd(ctx),
        Command::ProxCheck => prox_cmd(ctx),
        Command::ProjectCheck => project_cmd(ctx),
        Command::NeumannCheck => neumann_cmd(ctx),
        Command::IbpCheck => ibp_cmd(ctx),
        Command::Identities => identities_cmd(ctx),
    }
}

fn solve_cmd(ctx: &Context) -> Result<Summary> {
    let mut summary = Summary::new(Command::Solve.name());
    let s = &ctx.cfg.solver;
    let basis = HermiteBasis::new(ctx.model.dim(), s.degree)?;
    let f = ctx.rhs()?;
    let fv = |x: &[f64]| f.value(x);
    let weight = ctx.weight()?;
    let domain = ctx.domain()?;
    let (density, rule, verify_rule) = match (s.mode, &domain) {
        (SolveMode::DomainDirect, None) => {
            let rule = ctx.volume_rule(None, s.quadrature)?;
            let v = ctx.cfg.verify.rule.map(|r| ctx.volume_rule(None, r)).transpose()?;
            (Density::whole_space(weight.clone()), rule, v)
        }
        (SolveMode::DomainDirect, Some(d)) => {
            let rule = ctx.volume_rule(Some(&**d), s.quadrature)?;
            let v = ctx.cfg.verify.rule.map(|r| ctx.volume_rule(Some(&**d), r)).transpose()?;
            (Density::on_domain(weight.clone(), d.clone())?, rule, v)
        }
        (SolveMode::WholeSpacePenalized, Some(d)) => {
            let alpha = s.alpha.expect("validated");
            let v = PenalizedPotential::new(weight.clone(), d.clone(), alpha, s.weight_mode)?;
            let q = s.quadrature;
            let rule = penalized_quadrature(&ctx.model, &**d, alpha, q.kind, q.resolution)?;
            let vr = ctx
                .cfg
                .verify
                .rule
                .map(|r| penalized_quadrature(&ctx.model, &**d, alpha, r.kind, r.resolution))
                .transpose()?;
            (Density::whole_space(Arc::new(v)), rule, vr)
        }
        (SolveMode::WholeSpacePenalized, None) => {
            return Err(CliError::Input("whole-space-penalized mode needs a domain".into()));
        }
    };
    let system = assemble(&basis, &density, fv, s.lambda, &rule)?;
    let sol = solve(&system)?;
    let report = sobolev_report(&sol, &density, fv, verify_rule.as_ref().unwrap_or(&rule))?;

    let path = ctx.path("solution.csv");
    let mut w = csv_writer(ctx.create("solution.csv", &mut summary)?);
    w.write_record(["multi_index", "coefficient"]).map_err(|e| csv_err(&path, e))?;
    for (i, c) in sol.coeffs().iter().enumerate() {
        w.write_record([basis.index_label(i), fmt_float(*c)]).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|source| CliError::Output { path: path.clone(), source })?;

    let path = ctx.path("norms.csv");
    let mut w = csv_writer(ctx.create("norms.csv", &mut summary)?);
    let se = report.quadrature_stderr;
    w.write_record(["quantity", "norm", "ratio", "stderr"]).map_err(|e| csv_err(&path, e))?;
    for (q, v, r, e) in [
        ("u", report.norm_u, Some(report.ratio_u), se.u),
        ("grad", report.norm_grad, Some(report.ratio_grad), se.grad),
        ("hess", report.norm_hess, Some(report.ratio_hess), se.hess),
        ("f", report.norm_f, None, se.f),
    ] {
        w.write_record([q.to_string(), fmt_float(v), r.map(fmt_float).unwrap_or_default(), fmt_float(e)])
            .map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|source| CliError::Output { path, source })?;

    let tol = &ctx.cfg.verify.tolerances;
    let (tu, tg) = if report.stochastic { report.tolerances() } else { (tol.ratio_slack, tol.ratio_slack) };
    let mut c3 = Criterion::new(3, "resolvent-bounds");
    c3.push(Check::at_most("ratio_u", report.ratio_u, 1.0 + tu));
    c3.push(Check::at_most("ratio_grad", report.ratio_grad, 1.0 + tg));
    c3.push(Check::at_most("ratio_hess", report.ratio_hess, tol.ratio_hess));

    // closed form for the Ornstein–Uhlenbeck case: u_k = f_k/(λ + |k|)
    let ou = ctx.cfg.weight.kind == WeightKind::Zero && domain.is_none();
    if ou {
        let mut worst: f64 = 0.0;
        for (i, k) in basis.indices().iter().enumerate() {
            let total: usize = k.iter().sum();
            let fk = f.basis().position(k).map(|j| f.coeffs()[j]).unwrap_or(0.0);
            worst = worst.max((sol.coeffs()[i] - fk / (s.lambda + total as f64)).abs());
        }
        let mut c2 = Criterion::new(2, "ou-resolvent-oracle");
        c2.push(Check::at_most("coefficient_error", worst, 1e-9));
        summary.criteria.push(c2);
    }
    summary.criteria.push(c3);
    summary.value("lambda", s.lambda);
    summary.value("degree", s.degree);
    summary.value("unknowns", basis.len());
    summary.value("quadrature", rule.kind().name());
    summary.value("quadrature_nodes", rule.len());
    summary.value(
        "norms",
        json!({"u": report.norm_u, "grad": report.norm_grad, "hess": report.norm_hess, "f": report.norm_f}),
    );
    summary.value("ratios", json!({"u": report.ratio_u, "grad": report.ratio_grad, "hess": report.ratio_hess}));
    summary.value("stochastic", report.stochastic);
    Ok(summary)
}

fn sweep_cmd(ctx: &Context) -> Result<Summary> {
    let mut summary = Summary::new(Command::PenalizeSweep.name());
    let domain = ctx.require_domain(Command::PenalizeSweep)?;
    let s = &ctx.cfg.solver;
    let q = s.quadrature;
    let penalized_kind = match (ctx.cfg.domain.kind, q.kind) {
        (DomainKind::Halfspace, _) => RuleKind::PenalizedSplit,
        (_, RuleKind::MonteCarlo) => RuleKind::MonteCarlo,
        _ => RuleKind::TensorGaussHermite,
    };
    let penalized_resolution = if penalized_kind == RuleKind::TensorGaussHermite { s.degree + 4 } else { q.resolution };
    let cfg = SweepConfig {
        degree: s.degree,
        domain_rule: q,
        penalized_rule: RuleSpec { kind: penalized_kind, resolution: penalized_resolution },
        mode: s.weight_mode,
    };
    let f = ctx.rhs()?;
    let alphas = &ctx.cfg.verify.alphas;
    let sweep = penalization_sweep(&ctx.model, ctx.weight()?, domain, |x| f.value(x), s.lambda, alphas, &cfg)?;
    let path = ctx.path("sweep.csv");
    write_sweep_csv(ctx.create("sweep.csv", &mut summary)?, &sweep).map_err(|e| CliError::Output {
        path,
        source: std::io::Error::other(e),
    })?;
    let first = sweep.distances[0];
    let last = *sweep.distances.last().expect("non-empty grid");
    let mut c = Criterion::new(6, "penalization-convergence");
    c.push(Check::flag("strictly_decreasing", sweep.strictly_decreasing()));
    c.push(Check::at_most("final_over_initial", last / first, ctx.cfg.verify.tolerances.penalization_reduction));
    summary.criteria.push(c);
    summary.value("distances", sweep.distances.clone());
    summary.value("empirical_rate", sweep.empirical_rate());
    summary.value("penalized_rule", penalized_kind.name());
    Ok(summary)
}

/// Coarse grid over `[−radius, radius]ⁿ` then a fine grid around the best
/// coarse point; `n ≤ 2`.
fn grid_minimize(u: &dyn ConvexPotential, x: &[f64], alpha: f64, radius: f64) -> (Vec<f64>, f64) {
    let obj = |h: &[f64]| {
        let z: Vec<f64> = x.iter().zip(h).map(|(a, b)| a + b).collect();
        u.value(&z) + dot(h, h) / (2.0 * alpha)
    };
    let search = |centre: &[f64], half: f64, step: f64| {
        let m = (half / step).round() as i64;
        let axis: Vec<f64> = (-m..=m).map(|i| i as f64 * step).collect();
        let mut best = (centre.to_vec(), f64::INFINITY);
        let mut h = centre.to_vec();
        let mut visit = |h: &[f64]| {
            let v = obj(h);
            if v < best.1 {
                best = (h.to_vec(), v);
            }
        };
        match centre.len() {
            1 => {
                for a in &axis {
                    h[0] = centre[0] + a;
                    visit(&h);
                }
            }
            _ => {
                for a in &axis {
                    for b in &axis {
                        h[0] = centre[0] + a;
                        h[1] = centre[1] + b;
                        visit(&h);
                    }
                }
            }
        }
        best
    };
    let coarse = search(&vec![0.0; x.len()], radius, 0.05);
    search(&coarse.0, 0.1, 1e-3)
}

fn prox_cmd(ctx: &Context) -> Result<Summary> {
    let mut summary = Summary::new(Command::ProxCheck.name());
    let opts = ProxOptions::default();
    let u = ctx.weight()?;
    let v = &ctx.cfg.verify;
    let tol = &v.tolerances;
    let mut rng = ctx.model.substream(4);

    let path = ctx.path("prox_semigroup.csv");
    let mut w = csv_writer(ctx.create("prox_semigroup.csv", &mut summary)?);
    w.write_record(["case", "alpha", "beta", "lhs", "rhs", "rel_err"]).map_err(|e| csv_err(&path, e))?;
    let mut semigroup: f64 = 0.0;
    for case in 0..v.samples {
        let x: Vec<f64> = rng.next_point().iter().map(|t| 2.0 * t).collect();
        let alpha = rng.uniform(0.05, 1.0);
        let beta = rng.uniform(0.05, 1.0);
        let (lhs, rhs) = semigroup_check(&u, &x, alpha, beta, &opts)?;
        let rel = (lhs - rhs).abs() / (1.0 + rhs.abs());
        semigroup = semigroup.max(rel);
        w.write_record([case.to_string(), fmt_float(alpha), fmt_float(beta), fmt_float(lhs), fmt_float(rhs), fmt_float(rel)])
            .map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|source| CliError::Output { path, source })?;

    let grid: Vec<f64> = (0..=10).map(|k| 0.5f64.powi(k)).collect();
    let a_min = *grid.last().expect("non-empty");
    let path = ctx.path("prox_dyadic.csv");
    let mut w = csv_writer(ctx.create("prox_dyadic.csv", &mut summary)?);
    w.write_record(["case", "alpha", "envelope_value", "grad_norm", "potential", "potential_grad_norm"])
        .map_err(|e| csv_err(&path, e))?;
    let (mut values_monotone, mut norms_monotone, mut below) = (true, true, true);
    let (mut norm_gap, mut fd): (f64, f64) = (0.0, 0.0);
    for case in 0..v.samples.min(10) {
        let x = rng.next_point();
        let ux = u.value(&x);
        let gu = norm(&u.gradient(&x));
        let mut prev: Option<(f64, f64)> = None;
        for &a in &grid {
            let p = prox(&*u, &x, a, &opts)?;
            let gn = norm(&p.envelope_grad);
            if let Some((pv, pg)) = prev {
                values_monotone &= p.envelope_value >= pv - tol.monotone;
                norms_monotone &= gn >= pg - tol.monotone;
            }
            below &= p.envelope_value <= ux + tol.monotone;
            prev = Some((p.envelope_value, gn));
            w.write_record([case.to_string(), fmt_float(a), fmt_float(p.envelope_value), fmt_float(gn), fmt_float(ux), fmt_float(gu)])
                .map_err(|e| csv_err(&path, e))?;
        }
        let g = gradient_monotonicity_check(&*u, &x, a_min, 2.0 * a_min, &opts)?;
        norm_gap = norm_gap.max((g.fine - g.potential).abs());
        for a in [0.1, 0.5] {
            let p = prox(&*u, &x, a, &opts)?;
            let num = central_gradient(|z| envelope_value(&*u, z, a, &opts).unwrap_or(f64::NAN), &x, 1e-5);
            let scale = norm(&num).max(norm(&p.envelope_grad));
            if scale > 0.0 {
                fd = fd.max(norm(&sub(&p.envelope_grad, &num)) / scale);
            }
        }
    }
    w.flush().map_err(|source| CliError::Output { path, source })?;

    let mut c = Criterion::new(4, "moreau-yosida");
    c.push(Check::at_most("semigroup", semigroup, tol.semigroup));
    c.push(Check::flag("monotone_values", values_monotone && below));
    c.push(Check::flag("monotone_gradient_norms", norms_monotone));
    c.push(Check::at_most("gradient_norm_gap", norm_gap, tol.gradient_norm));
    c.push(Check::at_most("gradient_formula", fd, tol.gradient_formula));
    if ctx.model.dim() <= 2 {
        let (mut dmin, mut dval): (f64, f64) = (0.0, 0.0);
        for alpha in [0.3, 1.0] {
            let x = rng.next_point();
            let p = prox(&*u, &x, alpha, &opts)?;
            let (h, val) = grid_minimize(&*u, &x, alpha, 5.0);
            dmin = dmin.max(norm(&sub(&p.minimizer, &h)));
            dval = dval.max((p.envelope_value - val).abs());
        }
        c.push(Check::at_most("grid_minimizer", dmin, tol.grid_minimizer));
        c.push(Check::at_most("grid_value", dval, tol.grid_value));
    }
    summary.criteria.push(c);
    summary.value("alpha_min", a_min);
    Ok(summary)
}

fn project_cmd(ctx: &Context) -> Result<Summary> {
    let mut summary = Summary::new(Command::ProjectCheck.name());
    let domain = ctx.require_domain(Command::ProjectCheck)?;
    let tol = &ctx.cfg.verify.tolerances;
    let mut rng = ctx.model.substream(31);
    let samples = sample_domain(&*domain, &mut rng, VI_SAMPLES)?;
    let path = ctx.path("projection.csv");
    let mut w = csv_writer(ctx.create("projection.csv", &mut summary)?);
    w.write_record(["case", "distance", "vi_residual", "lipschitz_ratio", "monotonicity", "fd_rel"])
        .map_err(|e| csv_err(&path, e))?;
    let (mut vi, mut lip, mut mono, mut fd) = (f64::INFINITY, 0.0f64, f64::INFINITY, 0.0f64);
    for case in 0..ctx.cfg.verify.samples {
        let x: Vec<f64> = rng.next_point().iter().map(|t| 3.0 * t).collect();
        let p = project_certified(&*domain, &x, &samples)?;
        let r = p.vi_residual.unwrap_or(0.0);
        let hs: Vec<Vec<f64>> = (0..5).map(|_| rng.next_point()).collect();
        let l = lipschitz_probe(&*domain, &x, &hs)?;
        let mut m = f64::INFINITY;
        for h in &hs {
            let xh: Vec<f64> = x.iter().zip(h).map(|(a, b)| a + b).collect();
            m = m.min(dot(&sub(&domain.project(&xh)?.offset, &p.offset), h));
        }
        let g = grad_distance_sq(&*domain, &x)?;
        let num = central_gradient(|z| distance_sq(&*domain, z).unwrap_or(f64::NAN), &x, 1e-5);
        let scale = norm(&g).max(norm(&num));
        let e = if scale > 0.0 { norm(&sub(&g, &num)) / scale } else { 0.0 };
        vi = vi.min(r);
        lip = lip.max(l);
        mono = mono.min(m);
        fd = fd.max(e);
        w.write_record([case.to_string(), fmt_float(p.distance), fmt_float(r), fmt_float(l), fmt_float(m), fmt_float(e)])
            .map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|source| CliError::Output { path, source })?;
    let mut membership = true;
    for _ in 0..10_000 {
        let x: Vec<f64> = rng.next_point().iter().map(|t| 2.0 * t).collect();
        membership &= (distance_sq(&*domain, &x)? == 0.0) == domain.contains(&x);
    }
    let mut c = Criterion::new(5, "projection");
    c.push(Check::at_least("variational_inequality", vi, -tol.vi));
    c.push(Check::at_most("lipschitz", lip, 1.0 + tol.lipschitz));
    c.push(Check::at_least("monotonicity", mono, -tol.monotone));
    c.push(Check::at_most("distance_gradient", fd, tol.fd_distance));
    c.push(Check::flag("zero_distance_iff_member", membership));
    summary.criteria.push(c);
    Ok(summary)
}

fn neumann_cmd(ctx: &Context) -> Result<Summary> {
    let mut summary = Summary::new(Command::NeumannCheck.name());
    let domain = ctx.require_domain(Command::NeumannCheck)?;
    let s = &ctx.cfg.solver;
    let v = &ctx.cfg.verify;
    let f = ctx.rhs()?;
    let rep =
        neumann_series(&ctx.model, ctx.weight()?, domain, |x| f.value(x), s.lambda, &v.degrees, s.quadrature, v.boundary_resolution)?;
    let path = ctx.path("neumann.csv");
    write_neumann_csv(ctx.create("neumann.csv", &mut summary)?, &rep)
        .map_err(|e| CliError::Output { path, source: std::io::Error::other(e) })?;
    let r: Vec<f64> = rep.degree_series.iter().map(|p| p.1).collect();
    let mut c = Criterion::new(7, "neumann");
    c.push(Check::flag("nonincreasing", rep.monotone()));
    c.push(Check::at_most("final_over_initial", r[r.len() - 1] / r[0], v.tolerances.neumann_reduction));
    summary.criteria.push(c);
    summary.value("residuals", r);
    summary.value("boundary_rule", rep.boundary_rule.clone());
    Ok(summary)
}

fn ibp_cmd(ctx: &Context) -> Result<Summary> {
    let mut summary = Summary::new(Command::IbpCheck.name());
    let domain = ctx.require_domain(Command::IbpCheck)?;
    let v = &ctx.cfg.verify;
    let u = ctx.weight()?;
    let volume = ctx.volume_rule(Some(&*domain), v.rule.unwrap_or(ctx.cfg.solver.quadrature))?;
    let boundary = boundary_rule(&*domain, v.boundary_resolution)?;
    let n = ctx.model.dim();
    let mut rng = ctx.model.substream(61);
    let mut rows = Vec::with_capacity(v.ibp_cases);
    let mut agree = true;
    let mut worst: f64 = 0.0;
    for case in 0..v.ibp_cases {
        let phi = random_test_function(n, v.ibp_degree, &mut rng)?;
        let k = case % n;
        let r = ibp_check(&*u, &*domain, &phi, k, &volume, &boundary)?;
        agree &= r.abs_diff() <= v.tolerances.ibp.max(3.0 * r.stderr());
        worst = worst.max(r.abs_diff());
        rows.push((format!("case{case}-k{}", k + 1), r));
    }
    let path = ctx.path("ibp.csv");
    write_ibp_csv(ctx.create("ibp.csv", &mut summary)?, &rows)
        .map_err(|e| CliError::Output { path, source: std::io::Error::other(e) })?;
    let mut c = Criterion::new(8, "integration-by-parts");
    c.push(Check::flag("agreement", agree));
    summary.criteria.push(c);
    summary.value("max_abs_diff", worst);
    summary.value("volume_rule", volume.kind().name());
    Ok(summary)
}

fn identities_cmd(ctx: &Context) -> Result<Summary> {
    let mut summary = Summary::new(Command::Identities.name());
    let k = ctx.cfg.verify.terms;
    let sums = lambda_sum_check(k)?;
    let path = ctx.path("lambda.csv");
    let mut w = csv_writer(ctx.create("lambda.csv", &mut summary)?);
    w.write_record(["k", "lambda", "lambda_sq", "partial_sum"]).map_err(|e| csv_err(&path, e))?;
    let mut partial = 0.0;
    for i in 1..=k {
        let l = wgm::model::kl_eigenvalue(i);
        partial += l * l;
        w.write_record([i.to_string(), fmt_float(l), fmt_float(l * l), fmt_float(partial)]).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|source| CliError::Output { path, source })?;
    let l1 = wgm::model::kl_eigenvalue(1);
    let four_over_pi_sq = 4.0 / std::f64::consts::PI.powi(2);
    let mut c = Criterion::new(1, "eigen-identities");
    c.push(Check::at_most("lambda_1_rel_err", ((l1 - four_over_pi_sq) / four_over_pi_sq).abs(), 1e-12));
    c.push(Check::at_most("partial_sum_gap", (sums.partial - 1.0 / 6.0).abs(), ctx.cfg.verify.tolerances.lambda_sum));
    c.push(Check::flag("tail_bound_consistent", sums.consistent()));
    summary.criteria.push(c);
    summary.value("terms", k);
    summary.value("lambda_1", l1);
    summary.value("partial_sum", sums.partial);
    summary.value("tail_bound", sums.tail_bound);
    summary.value("target", 1.0 / 6.0);
    summary.value("four_times_partial_sum", sums.frobenius);
    Ok(summary)
}
