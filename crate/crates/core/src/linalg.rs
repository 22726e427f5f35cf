//! Small dense helpers on `&[f64]` plus the SPD solvers used by the Galerkin step.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[inline]
pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

#[inline]
pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| s * x).collect()
}

/// Dense systems above this size go through preconditioned CG.
pub const DENSE_LIMIT: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveDiagnostics {
    pub relative_residual: f64,
    pub refinement_steps: usize,
    /// Ratio of the extreme Cholesky pivots squared, a cheap conditioning proxy.
    pub condition_estimate: f64,
    pub iterative: bool,
}

/// Index and value of the first non-positive pivot of an unpivoted Cholesky
/// sweep, used only to report why the library factorization failed.
fn first_bad_pivot(a: &DMatrix<f64>) -> (usize, f64) {
    let n = a.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return (j, d);
        }
        let dj = d.sqrt();
        l[(j, j)] = dj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / dj;
        }
    }
    (n, f64::NAN)
}

/// Checks that a symmetric matrix admits a Cholesky factorization.
pub fn check_spd(a: &DMatrix<f64>) -> Result<()> {
    if a.clone().cholesky().is_some() {
        Ok(())
    } else {
        let (pivot, value) = first_bad_pivot(a);
        Err(Error::Conditioning { pivot, value })
    }
}

/// Solve `A x = b` for symmetric positive definite `A` with iterative refinement.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>, rel_tol: f64) -> Result<(DVector<f64>, SolveDiagnostics)> {
    if a.nrows() > DENSE_LIMIT {
        return pcg(a, b, rel_tol, 10 * a.nrows());
    }
    let chol = match a.clone().cholesky() {
        Some(c) => c,
        None => {
            let (pivot, value) = first_bad_pivot(a);
            return Err(Error::Conditioning { pivot, value });
        }
    };
    let diag = chol.l_dirty().diagonal();
    let (dmin, dmax) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    let condition_estimate = (dmax / dmin).powi(2);
    let bnorm = b.norm().max(f64::MIN_POSITIVE);
    let mut x = chol.solve(b);
    let mut steps = 0;
    let mut rel = (b - a * &x).norm() / bnorm;
    while rel > rel_tol && steps < 5 {
        let r = b - a * &x;
        x += chol.solve(&r);
        steps += 1;
        let next = (b - a * &x).norm() / bnorm;
        if next >= rel {
            rel = next;
            break;
        }
        rel = next;
    }
    Ok((x, SolveDiagnostics { relative_residual: rel, refinement_steps: steps, condition_estimate, iterative: false }))
}

/// Conjugate gradients with a Jacobi preconditioner.
pub fn pcg(a: &DMatrix<f64>, b: &DVector<f64>, rel_tol: f64, max_iter: usize) -> Result<(DVector<f64>, SolveDiagnostics)> {
    let n = a.nrows();
    let inv_diag: DVector<f64> = DVector::from_iterator(
        n,
        a.diagonal().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }),
    );
    let bnorm = b.norm().max(f64::MIN_POSITIVE);
    let mut x = DVector::zeros(n);
    let mut r = b.clone();
    let mut z = r.component_mul(&inv_diag);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    let mut it = 0;
    while it < max_iter && r.norm() / bnorm > rel_tol {
        let ap = a * &p;
        let pap = p.dot(&ap);
        if !(pap > 0.0) {
            return Err(Error::Conditioning { pivot: it, value: pap });
        }
        let alpha = rz / pap;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        z = r.component_mul(&inv_diag);
        let rz_next = r.dot(&z);
        p = &z + (rz_next / rz) * &p;
        rz = rz_next;
        it += 1;
    }
    let rel = (b - a * &x).norm() / bnorm;
    Ok((x, SolveDiagnostics { relative_residual: rel, refinement_steps: it, condition_estimate: f64::NAN, iterative: true }))
}
