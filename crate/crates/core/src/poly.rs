//! Tensor polynomials in local cell coordinates.
//!
//! Every spline restricted to an active cell is a polynomial of degree `r` in
//! each variable. It is stored as monomial coefficients in the local
//! coordinates `(ξ, η) ∈ [0,1]²` of the cell; coefficient `a·m + b` multiplies
//! `ξ^a η^b` with `m = r + 1`.

use crate::error::{AfemError, Result};

/// Highest derivative order supported per direction and in total.
pub const MAX_DERIVATIVE: usize = 4;

/// Largest number of coefficients per direction (degree 5).
pub const MAX_ORDER: usize = crate::MAX_DEGREE + 1;

/// Values of `d^k/dt^k t^a` for `k ≤ 4` and `a < m`.
#[derive(Clone, Copy, Debug)]
pub struct MonomialTable {
    pub d: [[f64; MAX_ORDER]; MAX_DERIVATIVE + 1],
}

impl MonomialTable {
    pub fn new(t: f64, m: usize) -> Self {
        let mut d = [[0.0; MAX_ORDER]; MAX_DERIVATIVE + 1];
        let mut pow = [0.0; MAX_ORDER];
        let mut acc = 1.0;
        for p in pow.iter_mut().take(m) {
            *p = acc;
            acc *= t;
        }
        for (k, row) in d.iter_mut().enumerate() {
            for a in k..m {
                // a!/(a-k)! t^(a-k)
                let falling: f64 = ((a - k + 1)..=a).map(|v| v as f64).product();
                row[a] = falling * pow[a - k];
            }
        }
        MonomialTable { d }
    }
}

/// A polynomial of degree `< m` in each local variable.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorPoly {
    m: usize,
    coeffs: Vec<f64>,
}

impl TensorPoly {
    pub fn zero(m: usize) -> Self {
        TensorPoly {
            m,
            coeffs: vec![0.0; m * m],
        }
    }

    pub fn from_coeffs(m: usize, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), m * m);
        TensorPoly { m, coeffs }
    }

    /// Outer product `p(ξ) q(η)`.
    pub fn outer(p: &[f64], q: &[f64]) -> Self {
        let m = p.len();
        assert_eq!(q.len(), m);
        let mut coeffs = vec![0.0; m * m];
        for a in 0..m {
            for b in 0..m {
                coeffs[a * m + b] = p[a] * q[b];
            }
        }
        TensorPoly { m, coeffs }
    }

    pub fn order(&self) -> usize {
        self.m
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn axpy(&mut self, alpha: f64, other: &[f64]) {
        for (c, o) in self.coeffs.iter_mut().zip(other) {
            *c += alpha * o;
        }
    }

    /// Local derivative `∂ξ^dx ∂η^dy` at precomputed monomial tables.
    pub fn eval_tables(&self, tx: &MonomialTable, ty: &MonomialTable, dx: usize, dy: usize) -> f64 {
        eval_coeffs(&self.coeffs, self.m, tx, ty, dx, dy)
    }

    /// Local derivative `∂ξ^dx ∂η^dy` at `(ξ, η)`.
    pub fn eval_local(&self, xi: [f64; 2], dx: usize, dy: usize) -> f64 {
        let tx = MonomialTable::new(xi[0], self.m);
        let ty = MonomialTable::new(xi[1], self.m);
        self.eval_tables(&tx, &ty, dx, dy)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }
}

/// Evaluates a coefficient block laid out like [`TensorPoly`].
#[inline]
pub fn eval_coeffs(
    coeffs: &[f64],
    m: usize,
    tx: &MonomialTable,
    ty: &MonomialTable,
    dx: usize,
    dy: usize,
) -> f64 {
    let rx = &tx.d[dx];
    let ry = &ty.d[dy];
    let mut sum = 0.0;
    for a in dx..m {
        let row = &coeffs[a * m..(a + 1) * m];
        let mut t = 0.0;
        for b in dy..m {
            t += row[b] * ry[b];
        }
        sum += rx[a] * t;
    }
    sum
}

/// Validates a derivative multi-index.
pub fn check_order(alpha: [u32; 2]) -> Result<()> {
    let total = alpha[0] + alpha[1];
    if total as usize > MAX_DERIVATIVE {
        Err(AfemError::UnsupportedDerivative(total))
    } else {
        Ok(())
    }
}

/// Univariate polynomial product.
pub fn poly_mul(p: &[f64], q: &[f64]) -> Vec<f64> {
    if p.is_empty() || q.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; p.len() + q.len() - 1];
    for (a, pa) in p.iter().enumerate() {
        for (b, qb) in q.iter().enumerate() {
            out[a + b] += pa * qb;
        }
    }
    out
}

/// `∫₀¹ p(t) dt` for monomial coefficients `p`.
pub fn poly_integral(p: &[f64]) -> f64 {
    p.iter().enumerate().map(|(a, c)| c / (a as f64 + 1.0)).sum()
}

pub fn poly_eval(p: &[f64], t: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

/// Shifted Legendre polynomials on `[0,1]`: values and first derivatives of
/// `P̃_0..P̃_{n-1}` at `t`.
pub fn shifted_legendre(n: usize, t: f64) -> (Vec<f64>, Vec<f64>) {
    let x = 2.0 * t - 1.0;
    let mut p = vec![0.0; n];
    let mut dp = vec![0.0; n];
    if n == 0 {
        return (p, dp);
    }
    p[0] = 1.0;
    if n > 1 {
        p[1] = x;
        dp[1] = 1.0;
    }
    for k in 2..n {
        let kf = k as f64;
        p[k] = ((2.0 * kf - 1.0) * x * p[k - 1] - (kf - 1.0) * p[k - 2]) / kf;
        dp[k] = dp[k - 2] + (2.0 * kf - 1.0) * p[k - 1];
    }
    // d/dt = 2 d/dx
    for d in &mut dp {
        *d *= 2.0;
    }
    (p, dp)
}

/// Monomial coefficients of the shifted Legendre polynomial `P̃_n` on `[0,1]`.
pub fn shifted_legendre_monomial(n: usize) -> Vec<f64> {
    // P̃_n(t) = (-1)^n Σ_k C(n,k) C(n+k,k) (-t)^k
    let binom = |a: usize, b: usize| -> f64 {
        (0..b).fold(1.0, |acc, i| acc * (a - i) as f64 / (i + 1) as f64)
    };
    let sign_n = if n % 2 == 0 { 1.0 } else { -1.0 };
    (0..=n)
        .map(|k| {
            let sign_k = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign_n * sign_k * binom(n, k) * binom(n + k, k)
        })
        .collect()
}

/// Inverts a small symmetric positive definite matrix (row-major) by
/// Gauss-Jordan elimination with partial pivoting.
pub fn invert_small(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x * n + col].abs().total_cmp(&m[y * n + col].abs()))?;
        if m[piv * n + col].abs() < 1e-300 {
            return None;
        }
        if piv != col {
            for k in 0..n {
                m.swap(piv * n + k, col * n + k);
                inv.swap(piv * n + k, col * n + k);
            }
        }
        let d = m[col * n + col];
        for k in 0..n {
            m[col * n + k] /= d;
            inv[col * n + k] /= d;
        }
        for row in 0..n {
            if row != col {
                let f = m[row * n + col];
                if f != 0.0 {
                    for k in 0..n {
                        m[row * n + k] -= f * m[col * n + k];
                        inv[row * n + k] -= f * inv[col * n + k];
                    }
                }
            }
        }
    }
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomial_derivatives() {
        let t = MonomialTable::new(0.5, 5);
        assert_eq!(t.d[0][3], 0.125);
        assert_eq!(t.d[1][3], 3.0 * 0.25);
        assert_eq!(t.d[4][4], 24.0);
        assert_eq!(t.d[2][1], 0.0);
    }

    #[test]
    fn tensor_eval() {
        // p = ξ²η + 3
        let mut c = vec![0.0; 9];
        c[0] = 3.0;
        c[2 * 3 + 1] = 1.0;
        let p = TensorPoly::from_coeffs(3, c);
        assert!((p.eval_local([0.5, 2.0], 0, 0) - 3.5).abs() < 1e-15);
        assert!((p.eval_local([0.5, 2.0], 2, 1) - 2.0).abs() < 1e-15);
        assert_eq!(p.eval_local([0.5, 2.0], 0, 2), 0.0);
    }

    #[test]
    fn legendre_matches_monomial_form() {
        for n in 0..5 {
            let mono = shifted_legendre_monomial(n);
            for &t in &[0.0, 0.3, 0.77, 1.0] {
                let (p, _) = shifted_legendre(5, t);
                assert!((poly_eval(&mono, t) - p[n]).abs() < 1e-13);
            }
        }
        let (_, dp) = shifted_legendre(4, 0.2);
        // P̃_2 = 6t² - 6t + 1
        assert!((dp[2] - (12.0 * 0.2 - 6.0)).abs() < 1e-14);
    }

    #[test]
    fn small_inverse() {
        let a = [4.0, 1.0, 1.0, 3.0];
        let inv = invert_small(&a, 2).unwrap();
        let id = [
            a[0] * inv[0] + a[1] * inv[2],
            a[0] * inv[1] + a[1] * inv[3],
            a[2] * inv[0] + a[3] * inv[2],
            a[2] * inv[1] + a[3] * inv[3],
        ];
        for (x, e) in id.iter().zip([1.0, 0.0, 0.0, 1.0]) {
            assert!((x - e).abs() < 1e-15);
        }
        assert!(invert_small(&[1.0, 2.0, 2.0, 4.0], 2).is_none());
    }
}
