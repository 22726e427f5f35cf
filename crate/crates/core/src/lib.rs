//! Elliptic problems `λu − Lu = f` under weighted Gaussian measures on convex
//! domains, in Karhunen–Loève coordinates of a truncated Wiener space.
//!
//! Coordinates are taken with respect to the orthonormal Cameron–Martin basis,
//! so the coordinate law is the standard Gaussian on ℝⁿ and every gradient
//! along H is an ordinary Euclidean gradient.

pub mod domain_rules;
pub mod domains;
pub mod error;
pub mod hermite;
pub mod linalg;
pub mod model;
mod parallel;
pub mod prox;
pub mod quadrature;
pub mod solver;
pub mod verify;
pub mod weights;

pub use domains::{ConvexDomain, EllipsoidDomain, HalfspaceDomain, ProjectionResult, WholeSpace};
pub use error::{Error, Result};
pub use hermite::{BasisEval, HermiteBasis};
pub use model::{GaussianSampler, PathPoint, TruncatedModel};
pub use prox::{ConvexPotential, ProxOptions, ProxResult};
pub use quadrature::{build_quadrature, Estimate, QuadratureRule, RuleKind};
