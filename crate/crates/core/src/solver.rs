//! Sparse symmetric positive definite solvers.
//!
//! The direct path reorders with reverse Cuthill-McKee, factors the envelope
//! with a row-oriented Cholesky and polishes the result with iterative
//! refinement using compensated residuals.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::assembly::SystemMatrix;
use crate::error::{AfemError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    Direct,
    #[serde(rename = "cg")]
    ConjugateGradient,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub method: SolveMethod,
    /// Relative residual target for CG; componentwise backward error bound
    /// for the direct solver.
    pub tol: f64,
    /// Iteration cap for CG.
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            method: SolveMethod::Direct,
            tol: 1e-10,
            max_iter: 20_000,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(AfemError::InvalidConfig(format!(
                "solver tolerance must lie in (0, 1), got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(AfemError::InvalidConfig("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    /// `‖Ax − b‖₂ / ‖b‖₂` (zero when `b = 0`).
    pub relative_residual: f64,
    /// CG iterations, or refinement steps for the direct solver.
    pub iterations: usize,
}

pub fn solve(a: &SystemMatrix, b: &[f64], opts: &SolveOptions) -> Result<Solution> {
    opts.validate()?;
    if b.len() != a.dim() {
        return Err(AfemError::DimensionMismatch {
            expected: a.dim(),
            found: b.len(),
        });
    }
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(Solution {
            x: vec![0.0; b.len()],
            relative_residual: 0.0,
            iterations: 0,
        });
    }
    match opts.method {
        SolveMethod::Direct => solve_direct(a, b, bnorm, opts.tol),
        SolveMethod::ConjugateGradient => solve_cg(a, b, bnorm, opts),
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `b − A x` accumulated in double-double precision.
pub fn residual_compensated(a: &SystemMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    (0..a.dim())
        .map(|i| {
            let (cols, vals) = a.row(i);
            let (mut s, mut c) = (b[i], 0.0);
            for (&j, &v) in cols.iter().zip(vals) {
                let p = -v * x[j];
                let pe = (-v).mul_add(x[j], -p);
                let t = s + p;
                let z = t - s;
                let e = (s - (t - z)) + (p - z);
                s = t;
                c += e + pe;
            }
            s + c
        })
        .collect()
}

/// Componentwise backward error `max_i |r_i| / (|A||x| + |b|)_i`.
///
/// The residual of the correctly rounded solution is of order
/// `ε (|A||x|)_i`, so this stays at roundoff level however large the
/// condition number gets.
pub fn backward_error(a: &SystemMatrix, x: &[f64], b: &[f64], r: &[f64]) -> f64 {
    (0..a.dim())
        .map(|i| {
            let (cols, vals) = a.row(i);
            let scale = cols.iter().zip(vals).map(|(&j, v)| (v * x[j]).abs()).sum::<f64>() + b[i].abs();
            if scale > 0.0 {
                r[i].abs() / scale
            } else {
                r[i].abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Envelope Cholesky factor `P A Pᵀ = L Lᵀ`.
pub struct EnvelopeCholesky {
    perm: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    values: Vec<f64>,
}

impl EnvelopeCholesky {
    pub fn factor(a: &SystemMatrix) -> Result<Self> {
        let n = a.dim();
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            inv[p] = k;
        }
        let mut first = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            let (cols, _) = a.row(p);
            first[k] = cols.iter().map(|&c| inv[c]).filter(|&c| c <= k).min().unwrap_or(k);
        }
        let mut start = Vec::with_capacity(n + 1);
        start.push(0);
        for k in 0..n {
            start.push(start[k] + (k - first[k] + 1));
        }
        let mut values = vec![0.0; start[n]];
        for (k, &p) in perm.iter().enumerate() {
            let (cols, vals) = a.row(p);
            for (&c, &v) in cols.iter().zip(vals) {
                let j = inv[c];
                if j <= k {
                    values[start[k] + j - first[k]] = v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            let (done, rest) = values.split_at_mut(start[i]);
            let row = &mut rest[..i - fi + 1];
            for j in fi..i {
                let fj = first[j];
                let lo = fi.max(fj);
                let rj = &done[start[j]..start[j] + (j - fj + 1)];
                let dot: f64 = row[lo - fi..j - fi]
                    .iter()
                    .zip(&rj[lo - fj..j - fj])
                    .map(|(a, b)| a * b)
                    .sum();
                row[j - fi] = (row[j - fi] - dot) / rj[j - fj];
            }
            let d = row[i - fi] - row[..i - fi].iter().map(|v| v * v).sum::<f64>();
            if !(d > 0.0) || !d.is_finite() {
                return Err(AfemError::NotPositiveDefinite {
                    pivot: perm[i],
                    value: d,
                });
            }
            row[i - fi] = d.sqrt();
        }
        Ok(EnvelopeCholesky {
            perm,
            first,
            start,
            values,
        })
    }

    /// Number of stored factor entries.
    pub fn envelope_size(&self) -> usize {
        self.values.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.perm.len();
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.values[self.start[i]..self.start[i + 1]];
            let dot: f64 = row[..i - fi].iter().zip(&y[fi..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - dot) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.values[self.start[i]..self.start[i + 1]];
            y[i] /= row[i - fi];
            let yi = y[i];
            for (k, l) in row[..i - fi].iter().enumerate() {
                y[fi + k] -= l * yi;
            }
        }
        let mut x = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
        x
    }
}

fn solve_direct(a: &SystemMatrix, b: &[f64], bnorm: f64, tol: f64) -> Result<Solution> {
    let chol = EnvelopeCholesky::factor(a)?;
    let mut x = chol.solve(b);
    let mut steps = 0;
    for _ in 0..2 {
        let r = residual_compensated(a, &x, b);
        let dx = chol.solve(&r);
        for (xi, d) in x.iter_mut().zip(dx) {
            *xi += d;
        }
        steps += 1;
    }
    let r = residual_compensated(a, &x, b);
    let res = norm(&r) / bnorm;
    let backward = backward_error(a, &x, b, &r);
    if !(backward <= tol.max(1e-12)) {
        return Err(AfemError::NoConvergence {
            residual: backward,
            iterations: steps,
        });
    }
    Ok(Solution {
        x,
        relative_residual: res,
        iterations: steps,
    })
}

fn solve_cg(a: &SystemMatrix, b: &[f64], bnorm: f64, opts: &SolveOptions) -> Result<Solution> {
    let n = a.dim();
    let diag = a.diagonal();
    if let Some((k, d)) = diag.iter().enumerate().find(|(_, d)| !(**d > 0.0)) {
        return Err(AfemError::NotPositiveDefinite { pivot: k, value: *d });
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    for it in 1..=opts.max_iter {
        let ap = a.matvec(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            return Err(AfemError::NotPositiveDefinite { pivot: it, value: pap });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rn = norm(&r) / bnorm;
        if rn <= opts.tol {
            let res = norm(&residual_compensated(a, &x, b)) / bnorm;
            return Ok(Solution {
                x,
                relative_residual: res,
                iterations: it,
            });
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(AfemError::NoConvergence {
        residual: norm(&r) / bnorm,
        iterations: opts.max_iter,
    })
}

/// Reverse Cuthill-McKee ordering; `perm[k]` is the original index of
/// position `k`.
pub fn reverse_cuthill_mckee(a: &SystemMatrix) -> Vec<usize> {
    let n = a.dim();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).0.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let root = pseudo_peripheral(a, seed, &degree);
        visited[root] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = a.row(v).0.iter().copied().filter(|&u| !visited[u]).collect();
            next.sort_by_key(|&u| (degree[u], u));
            for u in next {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

/// Endpoint of a few breadth-first sweeps, a cheap pseudo-peripheral node.
fn pseudo_peripheral(a: &SystemMatrix, seed: usize, degree: &[usize]) -> usize {
    let mut root = seed;
    let mut depth = 0;
    for _ in 0..4 {
        let (levels, last) = bfs_levels(a, root);
        let candidate = last
            .into_iter()
            .min_by_key(|&u| (degree[u], u))
            .unwrap_or(root);
        if levels <= depth {
            break;
        }
        depth = levels;
        root = candidate;
    }
    root
}

fn bfs_levels(a: &SystemMatrix, root: usize) -> (usize, Vec<usize>) {
    let mut seen = std::collections::HashSet::from([root]);
    let mut frontier = vec![root];
    let mut levels = 0;
    loop {
        let mut next = Vec::new();
        for &v in &frontier {
            for &u in a.row(v).0 {
                if seen.insert(u) {
                    next.push(u);
                }
            }
        }
        if next.is_empty() {
            return (levels, frontier);
        }
        levels += 1;
        frontier = next;
    }
}
