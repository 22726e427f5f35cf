//! Run configuration: a JSON document with nested blocks, validated in one pass
//! so that every offending key is reported together.

use std::path::PathBuf;

use serde_json::{Map, Value};
use thiserror::Error;
use wgm::quadrature::RuleKind;
use wgm::verify::RuleSpec;
use wgm::weights::{PsiKind, ScalarConvex, WeightMode};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("bad override `{0}`: expected key=value with a dotted key")]
    Override(String),
    #[error("invalid config:\n{}", .0.iter().map(|i| format!("  {}: {}", i.key, i.message)).collect::<Vec<_>>().join("\n"))]
    Schema(Vec<Issue>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Issue {
    pub key: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    None,
    Halfspace,
    Ellipsoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    Zero,
    Quadratic,
    U1,
    U2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    WholeSpacePenalized,
    DomainDirect,
}

#[derive(Debug, Clone)]
pub struct ModelBlock {
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct DomainBlock {
    pub kind: DomainKind,
    pub c: f64,
    pub r: f64,
    /// `(ξ, mass)` atoms of σ.
    pub sigma: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct WeightBlock {
    pub kind: WeightKind,
    pub scale: f64,
    pub phi: ScalarConvex,
    /// Explicit τ atoms; `None` means Lebesgue measure on [0, 1].
    pub tau: Option<Vec<(f64, f64)>>,
    pub tau_nodes: usize,
    pub psi: PsiKind,
    /// `(C, β)`; `None` uses the profile default.
    pub growth: Option<(f64, f64)>,
    pub xi_nodes: usize,
}

#[derive(Debug, Clone)]
pub struct SolverBlock {
    pub degree: usize,
    pub lambda: f64,
    pub quadrature: RuleSpec,
    pub mode: SolveMode,
    pub alpha: Option<f64>,
    pub weight_mode: WeightMode,
    /// Right-hand side as orthonormal Hermite terms `(multi-index, coefficient)`.
    pub rhs: Vec<(Vec<usize>, f64)>,
}

#[derive(Debug, Clone)]
pub struct Tolerances {
    pub ratio_slack: f64,
    pub ratio_hess: f64,
    pub semigroup: f64,
    pub monotone: f64,
    pub gradient_norm: f64,
    pub gradient_formula: f64,
    pub grid_minimizer: f64,
    pub grid_value: f64,
    pub vi: f64,
    pub lipschitz: f64,
    pub fd_distance: f64,
    pub penalization_reduction: f64,
    pub neumann_reduction: f64,
    pub ibp: f64,
    pub lambda_sum: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            ratio_slack: 1e-8,
            ratio_hess: 1.05,
            semigroup: 1e-7,
            monotone: 1e-9,
            gradient_norm: 1e-6,
            gradient_formula: 1e-5,
            grid_minimizer: 2e-3,
            grid_value: 1e-5,
            vi: 1e-9,
            lipschitz: 1e-8,
            fd_distance: 1e-6,
            penalization_reduction: 0.1,
            neumann_reduction: 0.25,
            ibp: 1e-8,
            lambda_sum: 6e-7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VerifyBlock {
    pub alphas: Vec<f64>,
    pub tolerances: Tolerances,
    pub boundary_resolution: usize,
    /// Higher-resolution rule for verification integrals.
    pub rule: Option<RuleSpec>,
    pub degrees: Vec<usize>,
    pub terms: usize,
    pub samples: usize,
    pub ibp_cases: usize,
    pub ibp_degree: usize,
}

#[derive(Debug, Clone)]
pub struct OutputBlock {
    pub dir: PathBuf,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelBlock,
    pub domain: DomainBlock,
    pub weight: WeightBlock,
    pub solver: SolverBlock,
    pub verify: VerifyBlock,
    pub output: OutputBlock,
}

const ALLOWED: &[(&str, &[&str])] = &[
    ("", &["model", "domain", "weight", "solver", "verify", "output"]),
    ("model", &["n", "seed"]),
    ("domain", &["kind", "c", "r", "sigma"]),
    ("weight", &["kind", "scale", "phi", "tau", "tau_nodes", "psi", "growth", "xi_nodes"]),
    ("weight.growth", &["C", "beta"]),
    ("solver", &["degree", "lambda", "quadrature", "mode", "alpha", "weight_mode", "rhs"]),
    ("solver.quadrature", &["kind", "resolution"]),
    ("verify", &["alphas", "tolerances", "boundary_resolution", "rule", "degrees", "terms", "samples", "ibp_cases", "ibp_degree"]),
    ("verify.rule", &["kind", "resolution"]),
    (
        "verify.tolerances",
        &[
            "ratio_slack",
            "ratio_hess",
            "semigroup",
            "monotone",
            "gradient_norm",
            "gradient_formula",
            "grid_minimizer",
            "grid_value",
            "vi",
            "lipschitz",
            "fd_distance",
            "penalization_reduction",
            "neumann_reduction",
            "ibp",
            "lambda_sum",
        ],
    ),
    ("output", &["dir", "formats"]),
];

/// Sets `path` (dotted, numeric segments index arrays) to `value`, creating
/// objects on the way.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| ConfigError::Override(spec.into()))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(ConfigError::Override(spec.into()));
    }
    // bare words are strings
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    for seg in key.split('.') {
        if !node.is_object() && !node.is_array() {
            *node = Value::Object(Map::new());
        }
        node = match node {
            Value::Array(items) => {
                let i: usize = seg.parse().map_err(|_| ConfigError::Override(spec.into()))?;
                items.get_mut(i).ok_or_else(|| ConfigError::Override(spec.into()))?
            }
            Value::Object(map) => map.entry(seg.to_string()).or_insert(Value::Null),
            _ => unreachable!(),
        };
    }
    *node = value;
    Ok(())
}

struct Reader<'a> {
    root: &'a Value,
    issues: Vec<Issue>,
}

impl<'a> Reader<'a> {
    fn issue(&mut self, key: &str, message: impl Into<String>) {
        self.issues.push(Issue { key: key.to_string(), message: message.into() });
    }

    fn get(&self, key: &str) -> Option<&'a Value> {
        let mut node = self.root;
        for seg in key.split('.') {
            node = node.as_object()?.get(seg)?;
        }
        (!node.is_null()).then_some(node)
    }

    fn f64_or(&mut self, key: &str, default: f64) -> f64 {
        self.opt_f64(key).unwrap_or(default)
    }

    fn opt_f64(&mut self, key: &str) -> Option<f64> {
        let v = self.get(key)?;
        match v.as_f64() {
            Some(x) if x.is_finite() => Some(x),
            _ => {
                self.issue(key, format!("expected a finite number, found {v}"));
                None
            }
        }
    }

    fn usize_or(&mut self, key: &str, default: usize) -> usize {
        let Some(v) = self.get(key) else { return default };
        match v.as_u64() {
            Some(x) => x as usize,
            None => {
                self.issue(key, format!("expected a nonnegative integer, found {v}"));
                default
            }
        }
    }

    fn str_or(&mut self, key: &str, default: &'a str) -> &'a str {
        let Some(v) = self.get(key) else { return default };
        match v.as_str() {
            Some(s) => s,
            None => {
                self.issue(key, format!("expected a string, found {v}"));
                default
            }
        }
    }

    fn choice<T: Copy>(&mut self, key: &str, default: &'a str, options: &[(&str, T)]) -> T {
        let s = self.str_or(key, default);
        match options.iter().find(|(name, _)| *name == s) {
            Some((_, v)) => *v,
            None => {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                self.issue(key, format!("unknown kind `{s}`; expected one of {}", names.join(", ")));
                options.iter().find(|(n, _)| *n == default).map(|(_, v)| *v).unwrap_or(options[0].1)
            }
        }
    }

    fn array(&mut self, key: &str) -> Option<&'a Vec<Value>> {
        let v = self.get(key)?;
        let a = v.as_array();
        if a.is_none() {
            self.issue(key, format!("expected an array, found {v}"));
        }
        a
    }

    fn f64_list(&mut self, key: &str) -> Option<Vec<f64>> {
        let items = self.array(key)?;
        let out: Option<Vec<f64>> = items.iter().map(|v| v.as_f64().filter(|x| x.is_finite())).collect();
        if out.is_none() {
            self.issue(key, "expected an array of finite numbers");
        }
        out
    }

    fn usize_list(&mut self, key: &str) -> Option<Vec<usize>> {
        let items = self.array(key)?;
        let out: Option<Vec<usize>> = items.iter().map(|v| v.as_u64().map(|x| x as usize)).collect();
        if out.is_none() {
            self.issue(key, "expected an array of nonnegative integers");
        }
        out
    }

    fn pairs(&mut self, key: &str) -> Option<Vec<(f64, f64)>> {
        let items = self.array(key)?;
        let out: Option<Vec<(f64, f64)>> = items
            .iter()
            .map(|p| match p.as_array().map(Vec::as_slice) {
                Some([a, b]) => Some((a.as_f64()?, b.as_f64()?)),
                _ => None,
            })
            .collect();
        if out.is_none() {
            self.issue(key, "expected an array of [node, mass] pairs");
        }
        out
    }

    fn rule(&mut self, key: &str, default: Option<(&'a str, usize)>) -> Option<RuleSpec> {
        if self.get(key).is_none() && default.is_none() {
            return None;
        }
        let (dk, dr) = default.unwrap_or(("tensor-gauss-hermite", 0));
        let kind_key = format!("{key}.kind");
        let name = self.str_or(&kind_key, dk);
        let kind = match RuleKind::parse(name) {
            Some(k) => k,
            None => {
                self.issue(&kind_key, format!("unknown quadrature kind `{name}`"));
                RuleKind::TensorGaussHermite
            }
        };
        let res_key = format!("{key}.resolution");
        let resolution = self.usize_or(&res_key, dr);
        if resolution == 0 {
            self.issue(&res_key, "must be ≥ 1");
        }
        Some(RuleSpec { kind, resolution })
    }

    fn unknown_keys(&mut self) {
        for (block, keys) in ALLOWED {
            let node = if block.is_empty() { Some(self.root) } else { self.get(block) };
            let Some(node) = node else { continue };
            let Some(map) = node.as_object() else {
                if !block.is_empty() {
                    self.issue(block, "expected an object");
                } else {
                    self.issue("<root>", "expected an object");
                }
                continue;
            };
            for k in map.keys() {
                if !keys.contains(&k.as_str()) {
                    let full = if block.is_empty() { k.clone() } else { format!("{block}.{k}") };
                    self.issue(&full, "unknown key");
                }
            }
        }
    }
}

impl RunConfig {
    pub fn load(path: &std::path::Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        let mut root: Value = serde_json::from_str(&text)?;
        for o in overrides {
            apply_override(&mut root, o)?;
        }
        Self::from_value(&root)
    }

    pub fn from_value(root: &Value) -> Result<Self, ConfigError> {
        let mut r = Reader { root, issues: Vec::new() };
        r.unknown_keys();

        let n = r.usize_or("model.n", 1);
        if n == 0 {
            r.issue("model.n", "must be ≥ 1");
        }
        let model = ModelBlock { n, seed: r.get("model.seed").and_then(Value::as_u64).unwrap_or(0) };
        if let Some(v) = r.get("model.seed") {
            if v.as_u64().is_none() {
                r.issue("model.seed", format!("expected a nonnegative integer, found {v}"));
            }
        }

        let kind = r.choice(
            "domain.kind",
            "none",
            &[("none", DomainKind::None), ("halfspace", DomainKind::Halfspace), ("ellipsoid", DomainKind::Ellipsoid)],
        );
        let c = r.f64_or("domain.c", 0.0);
        let radius = r.f64_or("domain.r", 1.0);
        if kind == DomainKind::Ellipsoid && !(radius > 0.0) {
            r.issue("domain.r", "must be > 0");
        }
        let sigma = r.pairs("domain.sigma").unwrap_or_else(|| vec![(1.0, 1.0)]);
        if kind == DomainKind::Halfspace {
            if sigma.is_empty() {
                r.issue("domain.sigma", "needs at least one atom");
            }
            if sigma.iter().any(|(xi, _)| !(0.0..=1.0).contains(xi)) {
                r.issue("domain.sigma", "atoms must lie in [0, 1]");
            }
        }
        let domain = DomainBlock { kind, c, r: radius, sigma };

        let wkind = r.choice(
            "weight.kind",
            "zero",
            &[("zero", WeightKind::Zero), ("quadratic", WeightKind::Quadratic), ("u1", WeightKind::U1), ("u2", WeightKind::U2)],
        );
        let scale = r.f64_or("weight.scale", 1.0);
        if !(scale >= 0.0) {
            r.issue("weight.scale", "must be ≥ 0");
        }
        let phi = r.choice(
            "weight.phi",
            "cosh",
            &[("cosh", ScalarConvex::Cosh), ("square", ScalarConvex::Square), ("softplus", ScalarConvex::Softplus)],
        );
        let tau = r.pairs("weight.tau");
        if let Some(t) = &tau {
            if t.is_empty() || t.iter().any(|(xi, w)| !(0.0..=1.0).contains(xi) || *w < 0.0) {
                r.issue("weight.tau", "atoms need ξ in [0, 1] and nonnegative mass");
            }
        }
        let tau_nodes = r.usize_or("weight.tau_nodes", 64);
        if tau_nodes == 0 {
            r.issue("weight.tau_nodes", "must be ≥ 1");
        }
        let psi = r.choice("weight.psi", "square", &[("square", PsiKind::Square), ("cosh", PsiKind::Cosh)]);
        let growth = if r.get("weight.growth").is_some() {
            let gc = r.f64_or("weight.growth.C", 1.0);
            let gb = r.f64_or("weight.growth.beta", 1.0);
            if !(gc >= 0.0) {
                r.issue("weight.growth.C", "must be ≥ 0");
            }
            if !(gb > 0.0) {
                r.issue("weight.growth.beta", "must be > 0");
            }
            Some((gc, gb))
        } else {
            None
        };
        let xi_nodes = r.usize_or("weight.xi_nodes", 32);
        if xi_nodes == 0 {
            r.issue("weight.xi_nodes", "must be ≥ 1");
        }
        let weight = WeightBlock { kind: wkind, scale, phi, tau, tau_nodes, psi, growth, xi_nodes };

        let degree = r.usize_or("solver.degree", 6);
        let lambda = r.f64_or("solver.lambda", 1.0);
        if !(lambda > 0.0) {
            r.issue("solver.lambda", format!("must be > 0, found {lambda}"));
        }
        let default_rule = match kind {
            DomainKind::None => ("tensor-gauss-hermite", degree + 4),
            DomainKind::Halfspace => ("halfspace-gauss", 40),
            DomainKind::Ellipsoid => ("monte-carlo", 100_000),
        };
        let quadrature = r.rule("solver.quadrature", Some(default_rule)).expect("default supplied");
        let mode = r.choice(
            "solver.mode",
            "domain-direct",
            &[("domain-direct", SolveMode::DomainDirect), ("whole-space-penalized", SolveMode::WholeSpacePenalized)],
        );
        let alpha = r.opt_f64("solver.alpha");
        match (mode, alpha) {
            (SolveMode::WholeSpacePenalized, None) => r.issue("solver.alpha", "required in whole-space-penalized mode"),
            (_, Some(a)) if !(a > 0.0) => r.issue("solver.alpha", "must be > 0"),
            _ => {}
        }
        if mode == SolveMode::WholeSpacePenalized && kind == DomainKind::None {
            r.issue("solver.mode", "whole-space-penalized needs a domain");
        }
        let weight_mode = r.choice("solver.weight_mode", "envelope", &[("envelope", WeightMode::Envelope), ("exact", WeightMode::Exact)]);
        let mut rhs = Vec::new();
        if let Some(items) = r.array("solver.rhs") {
            for (i, t) in items.iter().enumerate() {
                let key = format!("solver.rhs.{i}");
                let index = t.get("index").and_then(Value::as_array).and_then(|a| a.iter().map(|v| v.as_u64().map(|x| x as usize)).collect::<Option<Vec<_>>>());
                let coeff = t.get("coeff").and_then(Value::as_f64);
                match (index, coeff) {
                    (Some(idx), Some(c)) if idx.len() == n => rhs.push((idx, c)),
                    (Some(idx), Some(_)) => r.issue(&key, format!("multi-index has length {}, expected {n}", idx.len())),
                    _ => r.issue(&key, "expected {\"index\": [..], \"coeff\": number}"),
                }
            }
        } else {
            // f ≡ He₁ along the first axis
            let mut idx = vec![0; n.max(1)];
            idx[0] = 1;
            rhs.push((idx, 1.0));
        }
        let solver = SolverBlock { degree, lambda, quadrature, mode, alpha, weight_mode, rhs };

        let alphas = r.f64_list("verify.alphas").unwrap_or_else(|| vec![1.0, 0.3, 0.1, 0.03, 0.01]);
        if alphas.is_empty() || alphas.iter().any(|a| !(*a > 0.0)) || alphas.windows(2).any(|w| w[1] >= w[0]) {
            r.issue("verify.alphas", "must be a non-empty, strictly decreasing list of positive numbers");
        }
        let d = Tolerances::default();
        let mut tol = |name: &str, default: f64| {
            let key = format!("verify.tolerances.{name}");
            let v = r.f64_or(&key, default);
            if !(v >= 0.0) {
                r.issue(&key, "must be ≥ 0");
            }
            v
        };
        let tolerances = Tolerances {
            ratio_slack: tol("ratio_slack", d.ratio_slack),
            ratio_hess: tol("ratio_hess", d.ratio_hess),
            semigroup: tol("semigroup", d.semigroup),
            monotone: tol("monotone", d.monotone),
            gradient_norm: tol("gradient_norm", d.gradient_norm),
            gradient_formula: tol("gradient_formula", d.gradient_formula),
            grid_minimizer: tol("grid_minimizer", d.grid_minimizer),
            grid_value: tol("grid_value", d.grid_value),
            vi: tol("vi", d.vi),
            lipschitz: tol("lipschitz", d.lipschitz),
            fd_distance: tol("fd_distance", d.fd_distance),
            penalization_reduction: tol("penalization_reduction", d.penalization_reduction),
            neumann_reduction: tol("neumann_reduction", d.neumann_reduction),
            ibp: tol("ibp", d.ibp),
            lambda_sum: tol("lambda_sum", d.lambda_sum),
        };
        let boundary_resolution = r.usize_or("verify.boundary_resolution", 64);
        if boundary_resolution == 0 {
            r.issue("verify.boundary_resolution", "must be ≥ 1");
        }
        let vrule = r.rule("verify.rule", None);
        let degrees = r.usize_list("verify.degrees").unwrap_or_else(|| vec![4, 8, 12]);
        if degrees.is_empty() {
            r.issue("verify.degrees", "must be non-empty");
        }
        let terms = r.usize_or("verify.terms", 100);
        if terms == 0 {
            r.issue("verify.terms", "must be ≥ 1");
        }
        let samples = r.usize_or("verify.samples", 100);
        let ibp_cases = r.usize_or("verify.ibp_cases", 20);
        let ibp_degree = r.usize_or("verify.ibp_degree", 4);
        let verify = VerifyBlock {
            alphas,
            tolerances,
            boundary_resolution,
            rule: vrule,
            degrees,
            terms,
            samples,
            ibp_cases,
            ibp_degree,
        };

        let dir = PathBuf::from(r.str_or("output.dir", "out"));
        if let Some(f) = r.get("output.formats") {
            let ok = f.as_array().is_some_and(|a| a.iter().all(|v| matches!(v.as_str(), Some("csv" | "json"))));
            if !ok {
                r.issue("output.formats", "expected a list drawn from \"csv\", \"json\"");
            }
        }
        let output = OutputBlock { dir };

        if !r.issues.is_empty() {
            return Err(ConfigError::Schema(r.issues));
        }
        Ok(Self { model, domain, weight, solver, verify, output })
    }
}
