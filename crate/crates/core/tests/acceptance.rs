//! Acceptance suite: one line per criterion, nonzero exit if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::{fd_reflected, grid_prox, test_rhs, DomainChoice, WeightChoice};
use wgm::domain_rules::{boundary_rule, domain_quadrature};
use wgm::domains::{distance_sq, grad_distance_sq, lipschitz_probe, project_certified, sample_domain, ConvexDomain, HalfspaceDomain, EllipsoidDomain, VI_SAMPLES};
use wgm::hermite::HermiteBasis;
use wgm::linalg::{dot, norm, sub};
use wgm::prox::{central_gradient, envelope_value, gradient_monotonicity_check, prox, semigroup_check, ConvexPotential, ProxOptions};
use wgm::quadrature::RuleKind;
use wgm::solver::{assemble, solve, Density, HermiteExpansion};
use wgm::verify::{
    ibp_check, lambda_sum_check, neumann_series, penalization_sweep, random_test_function, sobolev_report, write_ibp_csv,
    write_neumann_csv, write_sweep_csv, IbpResult, RuleSpec, SweepConfig,
};
use wgm::weights::{WeightMode, ZeroWeight};
use wgm::TruncatedModel;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(checks: &[(&str, bool)], detail: String) -> Self {
        let failed: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
        let detail = if failed.is_empty() { detail } else { format!("failed: {}; {detail}", failed.join(", ")) };
        Self { pass: failed.is_empty(), detail }
    }
}

fn run(id: u32, name: &str, budget: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let res = catch_unwind(AssertUnwindSafe(f));
    let elapsed = t.elapsed();
    let (pass, detail) = match res {
        Ok(o) => {
            let in_time = budget.is_none_or(|b| elapsed <= b);
            let detail = if in_time { o.detail } else { format!("over time budget; {}", o.detail) };
            (o.pass && in_time, detail)
        }
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        }
    };
    println!(
        "criterion {id} [{name}]: {} ({:.3?}{}) {detail}",
        if pass { "PASS" } else { "FAIL" },
        elapsed,
        budget.map(|b| format!(", budget {b:?}")).unwrap_or_default()
    );
    pass
}

fn eigen_identities() -> Outcome {
    let model = TruncatedModel::new(4, 0).unwrap();
    // 4/π² to 17 digits
    let want = 0.405_284_734_569_351_1;
    let l1 = model.eigenvalue(1).unwrap();
    let s = lambda_sum_check(100).unwrap();
    let gap = (s.partial - 1.0 / 6.0).abs();
    Outcome::new(
        &[("lambda_1", ((l1 - want) / want).abs() < 1e-12), ("sum of squares", gap <= 6e-7 && s.consistent())],
        format!("λ₁ = {l1:.15}, |Σλ² − 1/6| = {gap:.3e}, 4Σλ² = {:.12}", s.frobenius),
    )
}

fn ou_resolvent() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for n in [1usize, 2] {
        let degree = 6;
        let model = TruncatedModel::new(n, 0).unwrap();
        let rule = wgm::build_quadrature(&model, RuleKind::TensorGaussHermite, degree + 4).unwrap();
        let basis = HermiteBasis::new(n, degree).unwrap();
        let density = Density::whole_space(Arc::new(ZeroWeight::new(n)));
        for (pos, k) in basis.indices().iter().enumerate() {
            let f = HermiteExpansion::basis_function(basis.clone(), k).unwrap();
            let total = k.iter().sum::<usize>() as f64;
            for lambda in [0.5, 1.0, 4.0] {
                let sol = solve(&assemble(&basis, &density, |x| f.value(x), lambda, &rule).unwrap()).unwrap();
                for (i, c) in sol.coeffs().iter().enumerate() {
                    let want = if i == pos { 1.0 / (lambda + total) } else { 0.0 };
                    worst = worst.max((c - want).abs());
                }
                cases += 1;
            }
        }
    }
    Outcome::new(&[("coefficients", worst <= 1e-9)], format!("{cases} cases, max coefficient error {worst:.3e}"))
}

fn resolvent_bounds() -> Outcome {
    let model = TruncatedModel::new(3, 5).unwrap();
    let basis = HermiteBasis::new(3, 10).unwrap();
    let mut ok_first = true;
    let mut ok_hess = true;
    let (mut max_u, mut max_g, mut max_h): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut worst_h = String::new();
    let mut count = 0;
    for w in WeightChoice::ALL {
        for d in DomainChoice::ALL {
            let potential = w.build(&model);
            let domain = d.build(&model);
            let (density, rule) = match d {
                DomainChoice::Whole => (
                    Density::whole_space(potential.clone()),
                    wgm::build_quadrature(&model, RuleKind::TensorGaussHermite, 16).unwrap(),
                ),
                DomainChoice::Halfspace => (
                    Density::on_domain(potential.clone(), domain.clone()).unwrap(),
                    domain_quadrature(&model, &*domain, RuleKind::HalfspaceGauss, 16).unwrap(),
                ),
                DomainChoice::Ellipsoid => (
                    Density::on_domain(potential.clone(), domain.clone()).unwrap(),
                    domain_quadrature(&model, &*domain, RuleKind::MonteCarlo, 100_000).unwrap(),
                ),
            };
            let base = assemble(&basis, &density, test_rhs, 1.0, &rule).unwrap();
            for lambda in [0.5, 1.0, 4.0] {
                let sol = solve(&base.with_lambda(lambda).unwrap()).unwrap();
                let r = sobolev_report(&sol, &density, test_rhs, &rule).unwrap();
                ok_first &= r.first_bounds_hold();
                if r.ratio_hess > 1.05 {
                    ok_hess = false;
                }
                max_u = max_u.max(r.ratio_u);
                max_g = max_g.max(r.ratio_grad);
                if r.ratio_hess > max_h {
                    max_h = r.ratio_hess;
                    worst_h = format!("{}/{}/λ={lambda}", w.name(), d.name());
                }
                count += 1;
            }
        }
    }
    Outcome::new(
        &[("ratio_u/ratio_grad", ok_first), ("ratio_hess", ok_hess)],
        format!("{count} configurations, max ratio_u {max_u:.6}, max ratio_grad {max_g:.6}, max ratio_hess {max_h:.6} ({worst_h})"),
    )
}

fn moreau_yosida() -> Outcome {
    let opts = ProxOptions::default();
    let model = TruncatedModel::new(3, 17).unwrap();
    let mut rng = model.substream(4);
    let weights = [WeightChoice::Quadratic.build(&model), WeightChoice::U1Cosh.build(&model)];

    let mut semigroup_worst: f64 = 0.0;
    for i in 0..100 {
        let u = &weights[i % 2];
        let x: Vec<f64> = rng.next_point().iter().map(|v| 2.0 * v).collect();
        let alpha = rng.uniform(0.05, 1.0);
        let beta = rng.uniform(0.05, 1.0);
        let (lhs, rhs) = semigroup_check(u, &x, alpha, beta, &opts).unwrap();
        semigroup_worst = semigroup_worst.max((lhs - rhs).abs() / (1.0 + rhs.abs()));
    }

    let grid: Vec<f64> = (0..=10).map(|k| 0.5f64.powi(k)).collect();
    let mut value_ok = true;
    let mut norm_ok = true;
    let mut norm_gap: f64 = 0.0;
    let mut norm_gap_scaled: f64 = 0.0;
    let mut fd_worst: f64 = 0.0;
    for u in &weights {
        for _ in 0..10 {
            let x: Vec<f64> = rng.next_point();
            let ux = u.value(&x);
            let gu = norm(&u.gradient(&x));
            let vals: Vec<f64> = grid.iter().map(|&a| envelope_value(&**u, &x, a, &opts).unwrap()).collect();
            value_ok &= vals.windows(2).all(|w| w[1] >= w[0] - 1e-9);
            let a_min = *grid.last().unwrap();
            value_ok &= vals.iter().all(|v| *v <= ux + 1e-10);
            value_ok &= ux - vals.last().unwrap() <= 0.5 * a_min * gu * gu + 1e-12;
            let norms: Vec<f64> = grid
                .windows(2)
                .map(|w| gradient_monotonicity_check(&**u, &x, w[1], w[0] - w[1], &opts).unwrap())
                .map(|g| {
                    norm_ok &= g.coarse <= g.fine + 1e-8 && g.fine <= g.potential + 1e-8;
                    g.fine
                })
                .collect();
            let gap = (norms.last().unwrap() - gu).abs();
            norm_gap = norm_gap.max(gap);
            norm_gap_scaled = norm_gap_scaled.max(gap / a_min);
            for &a in &[0.1, 0.5] {
                let p = prox(&**u, &x, a, &opts).unwrap();
                let fd = central_gradient(|z| envelope_value(&**u, z, a, &opts).unwrap(), &x, 1e-5);
                fd_worst = fd_worst.max(norm(&sub(&p.envelope_grad, &fd)) / norm(&fd).max(1e-300));
            }
        }
    }

    let mut grid_worst = (0.0f64, 0.0f64);
    for n in [1usize, 2] {
        let m = TruncatedModel::new(n, 3).unwrap();
        let mut r = m.substream(9);
        for w in [WeightChoice::Quadratic, WeightChoice::U1Cosh] {
            let u = w.build(&m);
            for alpha in [0.3, 1.0] {
                let x = r.next_point();
                let p = prox(&*u, &x, alpha, &opts).unwrap();
                let (h, v) = grid_prox(&*u, &x, alpha, 5.0, 1e-3);
                grid_worst.0 = grid_worst.0.max(norm(&sub(&p.minimizer, &h)));
                grid_worst.1 = grid_worst.1.max((p.envelope_value - v).abs());
            }
        }
    }

    Outcome::new(
        &[
            ("semigroup", semigroup_worst <= 1e-7),
            ("monotone values", value_ok),
            ("gradient norms", norm_ok && norm_gap <= 1e-6),
            ("gradient formula", fd_worst <= 1e-5),
            ("grid oracle", grid_worst.0 <= 2e-3 && grid_worst.1 <= 1e-5),
        ],
        format!(
            "semigroup rel {semigroup_worst:.2e}; |∇U| − |∇U_α| at α=2⁻¹⁰ up to {norm_gap:.3e} (= {norm_gap_scaled:.3}·α); \
             FD rel {fd_worst:.2e}; grid {:.2e}/{:.2e}",
            grid_worst.0, grid_worst.1
        ),
    )
}

fn projections() -> Outcome {
    let mut vi: f64 = f64::INFINITY;
    let mut lip: f64 = 0.0;
    let mut mono: f64 = f64::INFINITY;
    let mut fd: f64 = 0.0;
    let mut membership = true;
    for (n, which) in [(2usize, 0), (3, 0), (2, 1), (3, 1)] {
        let model = TruncatedModel::new(n, 23).unwrap();
        let domain: Box<dyn ConvexDomain> = if which == 0 {
            Box::new(HalfspaceDomain::from_measure(&model, &[(1.0, 1.0), (0.5, 0.5)], 0.3).unwrap())
        } else {
            Box::new(EllipsoidDomain::for_model(&model, 1.0).unwrap())
        };
        let mut rng = model.substream(31);
        let samples = sample_domain(&*domain, &mut rng, VI_SAMPLES).unwrap();
        for _ in 0..100 {
            let x: Vec<f64> = rng.next_point().iter().map(|v| 3.0 * v).collect();
            let p = project_certified(&*domain, &x, &samples).unwrap();
            vi = vi.min(p.vi_residual.unwrap());
            let hs: Vec<Vec<f64>> = (0..5).map(|_| rng.next_point()).collect();
            lip = lip.max(lipschitz_probe(&*domain, &x, &hs).unwrap());
            for h in &hs {
                let xh: Vec<f64> = x.iter().zip(h).map(|(a, b)| a + b).collect();
                let m1 = domain.project(&xh).unwrap().offset;
                mono = mono.min(dot(&sub(&m1, &p.offset), h));
            }
            let g = grad_distance_sq(&*domain, &x).unwrap();
            let num = central_gradient(|z| distance_sq(&*domain, z).unwrap(), &x, 1e-5);
            let scale = norm(&g).max(norm(&num));
            if scale > 0.0 {
                fd = fd.max(norm(&sub(&g, &num)) / scale);
            }
        }
        for _ in 0..10_000 {
            let x: Vec<f64> = rng.next_point().iter().map(|v| 2.0 * v).collect();
            membership &= (distance_sq(&*domain, &x).unwrap() == 0.0) == domain.contains(&x);
        }
    }
    Outcome::new(
        &[
            ("variational inequality", vi >= -1e-9),
            ("1-Lipschitz", lip <= 1.0 + 1e-8),
            ("monotonicity", mono >= -1e-9),
            ("gradient of d²", fd <= 1e-6),
            ("zero distance iff member", membership),
        ],
        format!("min VI {vi:.3e}, max Lipschitz ratio {lip:.12}, min monotonicity {mono:.3e}, FD rel {fd:.3e}"),
    )
}

fn half_line() -> (TruncatedModel, Arc<dyn ConvexDomain>) {
    (TruncatedModel::new(1, 0).unwrap(), Arc::new(HalfspaceDomain::new(vec![1.0], 0.0).unwrap()))
}

fn sweep_config() -> SweepConfig {
    SweepConfig {
        degree: 12,
        domain_rule: RuleSpec { kind: RuleKind::HalfspaceGauss, resolution: 40 },
        penalized_rule: RuleSpec { kind: RuleKind::PenalizedSplit, resolution: 40 },
        mode: WeightMode::Envelope,
    }
}

const ALPHAS: [f64; 5] = [1.0, 0.3, 0.1, 0.03, 0.01];

fn penalization() -> Outcome {
    let (model, domain) = half_line();
    let zero: Arc<dyn ConvexPotential> = Arc::new(ZeroWeight::new(1));
    let f = |x: &[f64]| x[0];
    let s = penalization_sweep(&model, zero, domain, f, 1.0, &ALPHAS, &sweep_config()).unwrap();
    let fdsol = fd_reflected(1.0, |x| x, -8.0, 0.0, 1e-3);
    let l2: f64 = fdsol
        .x
        .iter()
        .zip(&fdsol.u)
        .zip(&fdsol.vol)
        .map(|((x, u), v)| v * (s.direct.expansion.value(&[*x]) - u).powi(2))
        .sum::<f64>()
        .sqrt();
    let first = s.distances[0];
    let last = *s.distances.last().unwrap();
    Outcome::new(
        &[("strictly decreasing", s.strictly_decreasing()), ("final ≤ 0.1·initial", last <= 0.1 * first), ("FD oracle", l2 <= 1e-3)],
        format!(
            "distances {:?}, final/initial {:.4}, empirical rate {:.3}, direct vs FD L² {l2:.3e}",
            s.distances.iter().map(|d| format!("{d:.4e}")).collect::<Vec<_>>(),
            last / first,
            s.empirical_rate().unwrap_or(f64::NAN)
        ),
    )
}

fn neumann() -> Outcome {
    let zero = |n| -> Arc<dyn ConvexPotential> { Arc::new(ZeroWeight::new(n)) };
    let m1 = TruncatedModel::new(1, 0).unwrap();
    let m2 = TruncatedModel::new(2, 41).unwrap();
    let cases: Vec<(&str, TruncatedModel, Arc<dyn ConvexDomain>, RuleSpec)> = vec![
        ("n=1 halfspace", m1.clone(), half_line().1, RuleSpec { kind: RuleKind::HalfspaceGauss, resolution: 40 }),
        ("n=2 halfspace", m2.clone(), DomainChoice::Halfspace.build(&m2), RuleSpec { kind: RuleKind::HalfspaceGauss, resolution: 40 }),
        ("n=2 ellipsoid", m2.clone(), DomainChoice::Ellipsoid.build(&m2), RuleSpec { kind: RuleKind::EllipsoidPolar, resolution: 48 }),
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, model, domain, spec) in cases {
        let n = model.dim();
        let rep = neumann_series(&model, zero(n), domain, test_rhs, 1.0, &[4, 8, 12], spec, 64).unwrap();
        let r: Vec<f64> = rep.degree_series.iter().map(|p| p.1).collect();
        let pass = rep.monotone() && r[2] <= 0.25 * r[0];
        ok &= pass;
        detail.push(format!("{name}: {:.3e} {:.3e} {:.3e}", r[0], r[1], r[2]));
    }
    Outcome::new(&[("residual series", ok)], detail.join("; "))
}

fn ibp_rows(cases: usize) -> (Vec<(String, IbpResult)>, f64) {
    let mut rows = Vec::new();
    let mut worst_excess = f64::NEG_INFINITY;
    for n in [2usize, 3] {
        let model = TruncatedModel::new(n, 53).unwrap();
        for d in [DomainChoice::Halfspace, DomainChoice::Ellipsoid] {
            let domain = d.build(&model);
            let (volume, boundary) = match d {
                DomainChoice::Halfspace => (
                    domain_quadrature(&model, &*domain, RuleKind::HalfspaceGauss, 40).unwrap(),
                    boundary_rule(&*domain, 40).unwrap(),
                ),
                _ => (
                    domain_quadrature(&model, &*domain, RuleKind::EllipsoidPolar, 48).unwrap(),
                    boundary_rule(&*domain, 48).unwrap(),
                ),
            };
            for w in WeightChoice::ALL {
                let u = w.build(&model);
                let mut rng = model.substream(61);
                for c in 0..cases {
                    let phi = random_test_function(n, 4, &mut rng).unwrap();
                    let k = c % n;
                    let r = ibp_check(&*u, &*domain, &phi, k, &volume, &boundary).unwrap();
                    worst_excess = worst_excess.max(r.abs_diff() - (1e-8f64).max(3.0 * r.stderr()));
                    rows.push((format!("n{n}-{}-{}-{c}-k{}", d.name(), w.name(), k + 1), r));
                }
            }
        }
    }
    (rows, worst_excess)
}

fn integration_by_parts() -> Outcome {
    let (model, domain) = half_line();
    let vol = domain_quadrature(&model, &*domain, RuleKind::HalfspaceGauss, 20).unwrap();
    let bd = boundary_rule(&*domain, 4).unwrap();
    let one = HermiteExpansion::basis_function(HermiteBasis::new(1, 0).unwrap(), &[0]).unwrap();
    let r = ibp_check(&ZeroWeight::new(1), &*domain, &one, 0, &vol, &bd).unwrap();
    let g0 = 1.0 / common::TWO_PI.sqrt();
    let closed = (r.lhs.value - g0).abs() <= 1e-10 && (r.rhs.value - g0).abs() <= 1e-10;
    let (rows, excess) = ibp_rows(20);
    let agree = rows.iter().all(|(_, r)| r.agrees());
    let worst = rows.iter().map(|(_, r)| r.abs_diff()).fold(0.0, f64::max);
    Outcome::new(
        &[("closed form", closed), ("randomized", agree)],
        format!("{} randomized cases, max |lhs − rhs| {worst:.3e}, worst excess over tolerance {excess:.3e}", rows.len()),
    )
}

fn artifacts() -> Vec<Vec<u8>> {
    let (model, domain) = half_line();
    let zero: Arc<dyn ConvexPotential> = Arc::new(ZeroWeight::new(1));
    let s = penalization_sweep(&model, zero, domain, |x: &[f64]| x[0], 1.0, &ALPHAS, &sweep_config()).unwrap();
    let mut sweep = Vec::new();
    write_sweep_csv(&mut sweep, &s).unwrap();
    let m2 = TruncatedModel::new(2, 41).unwrap();
    let rep = neumann_series(
        &m2,
        Arc::new(ZeroWeight::new(2)),
        DomainChoice::Ellipsoid.build(&m2),
        test_rhs,
        1.0,
        &[4, 8],
        RuleSpec { kind: RuleKind::MonteCarlo, resolution: 100_000 },
        32,
    )
    .unwrap();
    let mut neu = Vec::new();
    write_neumann_csv(&mut neu, &rep).unwrap();
    let (rows, _) = ibp_rows(2);
    let mut ibp = Vec::new();
    write_ibp_csv(&mut ibp, &rows).unwrap();
    vec![sweep, neu, ibp]
}

fn determinism() -> Outcome {
    let pool = |k| rayon::ThreadPoolBuilder::new().num_threads(k).build().unwrap();
    let a = pool(1).install(artifacts);
    let b = pool(4).install(artifacts);
    let c = artifacts();
    Outcome::new(
        &[("byte-identical", a == b && b == c)],
        format!("CSV sizes {:?} bytes, compared across 1, 4 and default worker counts", a.iter().map(Vec::len).collect::<Vec<_>>()),
    )
}

fn main() {
    let results = [
        run(1, "eigen-identities", Some(Duration::from_millis(1)), eigen_identities),
        run(2, "OU resolvent oracle", Some(Duration::from_secs(1)), ou_resolvent),
        run(3, "resolvent bounds", Some(Duration::from_secs(300)), resolvent_bounds),
        run(4, "Moreau-Yosida properties", Some(Duration::from_secs(60)), moreau_yosida),
        run(5, "projection properties", Some(Duration::from_secs(30)), projections),
        run(6, "penalization convergence", Some(Duration::from_secs(60)), penalization),
        run(7, "Neumann condition", Some(Duration::from_secs(120)), neumann),
        run(8, "integration by parts", Some(Duration::from_secs(120)), integration_by_parts),
        run(9, "determinism", None, determinism),
    ];
    let failed = results.iter().filter(|p| !**p).count();
    println!("acceptance: {} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
