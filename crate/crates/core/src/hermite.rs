//! Tensor products of orthonormal probabilists' Hermite polynomials with a
//! total-degree cap.
//!
//! `h_0 = 1`, `h_1 = x`, `√(k+1) h_{k+1} = x h_k − √k h_{k−1}`, so that
//! `h_k' = √k h_{k−1}` and `∫ h_j h_k dγ = δ_{jk}`.

use crate::error::{Error, Result};

/// Values and first two derivatives of `h_0..=h_d` at `x`.
pub fn hermite_table(d: usize, x: f64, h: &mut [f64], dh: &mut [f64], d2h: &mut [f64]) {
    h[0] = 1.0;
    if d >= 1 {
        h[1] = x;
    }
    for k in 1..d {
        let kf = k as f64;
        h[k + 1] = (x * h[k] - kf.sqrt() * h[k - 1]) / (kf + 1.0).sqrt();
    }
    dh[0] = 0.0;
    d2h[0] = 0.0;
    for k in 1..=d {
        let kf = k as f64;
        dh[k] = kf.sqrt() * h[k - 1];
        d2h[k] = if k >= 2 { (kf * (kf - 1.0)).sqrt() * h[k - 2] } else { 0.0 };
    }
}

/// Orthonormal `h_k(x)`.
pub fn hermite(k: usize, x: f64) -> f64 {
    let mut h = vec![0.0; k + 1];
    let mut dh = vec![0.0; k + 1];
    let mut d2h = vec![0.0; k + 1];
    hermite_table(k, x, &mut h, &mut dh, &mut d2h);
    h[k]
}

/// Multi-indices with `|k|₁ ≤ degree`, graded then lexicographic (descending).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HermiteBasis {
    n: usize,
    degree: usize,
    indices: Vec<Vec<usize>>,
}

impl HermiteBasis {
    pub fn new(n: usize, degree: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("basis dimension must be ≥ 1".into()));
        }
        let mut indices = Vec::new();
        for total in 0..=degree {
            let mut cur = vec![0usize; n];
            compositions(total, 0, &mut cur, &mut indices);
        }
        Ok(Self { n, degree, indices })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[Vec<usize>] {
        &self.indices
    }

    pub fn position(&self, index: &[usize]) -> Option<usize> {
        self.indices.iter().position(|k| k.as_slice() == index)
    }

    pub fn index_label(&self, i: usize) -> String {
        self.indices[i].iter().map(|k| k.to_string()).collect::<Vec<_>>().join(":")
    }

    /// Evaluate every basis function (and optionally derivatives) at `x`.
    pub fn eval(&self, x: &[f64], order: usize, out: &mut BasisEval) {
        let n = self.n;
        let d = self.degree;
        let stride = d + 1;
        out.prepare(self.len(), n, order, stride);
        {
            let (hv, tail) = out.tables.split_at_mut(n * stride);
            let (dv, d2v) = tail.split_at_mut(n * stride);
            for (a, &xa) in x.iter().enumerate() {
                let r = a * stride..(a + 1) * stride;
                hermite_table(d, xa, &mut hv[r.clone()], &mut dv[r.clone()], &mut d2v[r]);
            }
        }
        let (hv, tail) = out.tables.split_at(n * stride);
        let (dv, d2v) = tail.split_at(n * stride);
        let npairs = n * (n + 1) / 2;
        for (i, k) in self.indices.iter().enumerate() {
            let mut v = 1.0;
            for a in 0..n {
                v *= hv[a * stride + k[a]];
            }
            out.values[i] = v;
            if order >= 1 {
                for j in 0..n {
                    let mut g = dv[j * stride + k[j]];
                    for a in 0..n {
                        if a != j {
                            g *= hv[a * stride + k[a]];
                        }
                    }
                    out.grads[i * n + j] = g;
                }
            }
            if order >= 2 {
                let mut p = 0;
                for r in 0..n {
                    for c in r..n {
                        let mut g = if r == c {
                            d2v[r * stride + k[r]]
                        } else {
                            dv[r * stride + k[r]] * dv[c * stride + k[c]]
                        };
                        for a in 0..n {
                            if a != r && a != c {
                                g *= hv[a * stride + k[a]];
                            }
                        }
                        out.hess[i * npairs + p] = g;
                        p += 1;
                    }
                }
            }
        }
    }
}

fn compositions(remaining: usize, pos: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    let n = cur.len();
    if pos == n - 1 {
        cur[pos] = remaining;
        out.push(cur.clone());
        return;
    }
    for k in (0..=remaining).rev() {
        cur[pos] = k;
        compositions(remaining - k, pos + 1, cur, out);
    }
    cur[pos] = 0;
}

/// Scratch buffers for [`HermiteBasis::eval`]. Hessians are packed row-wise
/// over the upper triangle `(r, c)`, `r ≤ c`.
#[derive(Debug, Clone, Default)]
pub struct BasisEval {
    pub values: Vec<f64>,
    pub grads: Vec<f64>,
    pub hess: Vec<f64>,
    tables: Vec<f64>,
}

impl BasisEval {
    fn prepare(&mut self, len: usize, n: usize, order: usize, stride: usize) {
        self.values.resize(len, 0.0);
        if order >= 1 {
            self.grads.resize(len * n, 0.0);
        }
        if order >= 2 {
            self.hess.resize(len * n * (n + 1) / 2, 0.0);
        }
        // h, h', h'' for every axis
        self.tables.resize(3 * n * stride, 0.0);
    }

    pub fn with_capacity(basis: &HermiteBasis) -> Self {
        let n = basis.dim();
        Self {
            values: Vec::new(),
            grads: Vec::new(),
            hess: Vec::new(),
            tables: vec![0.0; 3 * n * (basis.degree() + 1)],
        }
    }
}

/// Index of `(r, c)` in the packed upper triangle of an `n × n` matrix.
#[inline]
pub fn packed_index(n: usize, r: usize, c: usize) -> usize {
    let (r, c) = if r <= c { (r, c) } else { (c, r) };
    r * n - r * (r + 1) / 2 + c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TruncatedModel;
    use crate::quadrature::{build_quadrature, RuleKind};

    #[test]
    fn basis_size_is_binomial() {
        let b = HermiteBasis::new(3, 10).unwrap();
        assert_eq!(b.len(), 286);
        let b = HermiteBasis::new(2, 3).unwrap();
        assert_eq!(b.len(), 10);
        assert_eq!(b.indices()[0], vec![0, 0]);
        assert_eq!(b.indices()[1], vec![1, 0]);
        assert_eq!(b.position(&[1, 1]), Some(4));
    }

    #[test]
    fn he2_at_zero() {
        assert!((hermite(2, 0.0) + 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!((hermite(3, 1.5) - (1.5f64.powi(3) - 4.5) / 6f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn gram_matrix_is_identity() {
        let model = TruncatedModel::new(2, 0).unwrap();
        let rule = build_quadrature(&model, RuleKind::TensorGaussHermite, 8).unwrap();
        let basis = HermiteBasis::new(2, 6).unwrap();
        let mut ev = BasisEval::with_capacity(&basis);
        let k = basis.len();
        let mut gram = vec![0.0; k * k];
        for (x, w) in rule.iter() {
            basis.eval(x, 0, &mut ev);
            for i in 0..k {
                for j in 0..k {
                    gram[i * k + j] += w * ev.values[i] * ev.values[j];
                }
            }
        }
        for i in 0..k {
            for j in 0..k {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[i * k + j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let basis = HermiteBasis::new(3, 5).unwrap();
        let mut ev = BasisEval::with_capacity(&basis);
        let mut ev2 = BasisEval::with_capacity(&basis);
        let x = [0.3, -1.1, 0.8];
        basis.eval(&x, 2, &mut ev);
        let h = 1e-5;
        for j in 0..3 {
            let mut xp = x;
            xp[j] += h;
            basis.eval(&xp, 1, &mut ev2);
            let up_v = ev2.values.clone();
            let up_g = ev2.grads.clone();
            let mut xm = x;
            xm[j] -= h;
            basis.eval(&xm, 1, &mut ev2);
            for i in 0..basis.len() {
                let fd = (up_v[i] - ev2.values[i]) / (2.0 * h);
                assert!((fd - ev.grads[i * 3 + j]).abs() < 1e-7 * (1.0 + fd.abs()));
                for c in 0..3 {
                    let fd2 = (up_g[i * 3 + c] - ev2.grads[i * 3 + c]) / (2.0 * h);
                    let got = ev.hess[i * 6 + packed_index(3, j, c)];
                    assert!((fd2 - got).abs() < 1e-6 * (1.0 + fd2.abs()));
                }
            }
        }
    }

    #[test]
    fn packed_layout() {
        assert_eq!(packed_index(3, 0, 0), 0);
        assert_eq!(packed_index(3, 0, 2), 2);
        assert_eq!(packed_index(3, 1, 1), 3);
        assert_eq!(packed_index(3, 2, 1), 4);
        assert_eq!(packed_index(3, 2, 2), 5);
    }
}
