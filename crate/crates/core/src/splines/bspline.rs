//! Univariate open uniform B-splines on the dyadic grids of each level.
//!
//! At level `l` the grid has `N = 2^l` cells; knots are measured in cell units,
//! `t_k = clamp(k - r, 0, N)`, giving `N + r` functions. Function `p` is
//! nonzero on cells `max(p-r, 0) ..= min(p, N-1)`.

use std::collections::HashMap;

use crate::poly::poly_mul;

pub fn num_functions(level: u32, degree: usize) -> usize {
    (1usize << level) + degree
}

pub fn knot(level: u32, degree: usize, k: usize) -> i64 {
    (k as i64 - degree as i64).clamp(0, 1i64 << level)
}

/// Inclusive range of cells on which function `p` does not vanish.
pub fn support_cells(level: u32, degree: usize, p: usize) -> (usize, usize) {
    let n = 1usize << level;
    (p.saturating_sub(degree), p.min(n - 1))
}

/// Functions that do not vanish on cell `a`.
pub fn functions_on_cell(degree: usize, a: usize) -> std::ops::RangeInclusive<usize> {
    a..=a + degree
}

/// Polynomial piece of a single B-spline on the unit interval `[0, 1]`,
/// given its `r + 2` knots measured relative to the start of that interval.
pub fn piece_from_local_knots(knots: &[i64]) -> Vec<f64> {
    let r = knots.len() - 2;
    // Degree-zero functions on the knot spans of the local vector.
    let mut basis: Vec<Vec<f64>> = (0..=r)
        .map(|j| {
            if knots[j] <= 0 && knots[j + 1] >= 1 {
                vec![1.0]
            } else {
                vec![0.0]
            }
        })
        .collect();
    for k in 1..=r {
        let mut next = Vec::with_capacity(r + 1 - k);
        for j in 0..=(r - k) {
            let mut acc = vec![0.0; k + 1];
            let d1 = (knots[j + k] - knots[j]) as f64;
            if d1 != 0.0 {
                // (ξ - t_j) / (t_{j+k} - t_j)
                let lin = [-(knots[j] as f64) / d1, 1.0 / d1];
                for (a, c) in poly_mul(&lin, &basis[j]).into_iter().enumerate() {
                    acc[a] += c;
                }
            }
            let d2 = (knots[j + k + 1] - knots[j + 1]) as f64;
            if d2 != 0.0 {
                // (t_{j+k+1} - ξ) / (t_{j+k+1} - t_{j+1})
                let lin = [knots[j + k + 1] as f64 / d2, -1.0 / d2];
                for (a, c) in poly_mul(&lin, &basis[j + 1]).into_iter().enumerate() {
                    acc[a] += c;
                }
            }
            next.push(acc);
        }
        basis = next;
    }
    let mut out = basis.swap_remove(0);
    out.resize(r + 1, 0.0);
    out
}

/// Memoized polynomial pieces of level B-splines.
#[derive(Debug, Default)]
pub struct PieceCache {
    degree: usize,
    pieces: HashMap<Vec<i64>, Vec<f64>>,
}

impl PieceCache {
    pub fn new(degree: usize) -> Self {
        PieceCache {
            degree,
            pieces: HashMap::new(),
        }
    }

    /// Local monomial coefficients (length `r+1`) of function `p` at `level`
    /// on cell `a`. Returns zeros when the cell is outside the support.
    pub fn piece(&mut self, level: u32, p: usize, a: usize) -> &[f64] {
        let r = self.degree;
        let key: Vec<i64> = (p..=p + r + 1)
            .map(|k| knot(level, r, k) - a as i64)
            .collect();
        self.pieces
            .entry(key)
            .or_insert_with_key(|k| piece_from_local_knots(k))
    }
}

/// Two-scale relation: coefficients of each level-`l` function in terms of
/// level-`l+1` functions, computed by Boehm knot insertion.
pub fn refinement_matrix(level: u32, degree: usize) -> Vec<Vec<(usize, f64)>> {
    let r = degree;
    let fine_n = 1i64 << (level + 1);
    (0..num_functions(level, r))
        .map(|p| {
            let mut tau: Vec<i64> = (p..=p + r + 1).map(|k| 2 * knot(level, r, k)).collect();
            let mut coef = vec![1.0];
            let (lo, hi) = (tau[0], tau[r + 1]);
            let mut z = lo + 1;
            while z < hi {
                if z % 2 != 0 {
                    insert_knot(&mut tau, &mut coef, r, z);
                }
                z += 1;
            }
            // Locate the local knot vector inside the fine global vector.
            let first = tau[0];
            let mult_local = tau.iter().take_while(|&&t| t == first).count();
            let (first_index, mult_global) = if first == 0 {
                (0, r + 1)
            } else if first == fine_n {
                (fine_n as usize + r, r + 1)
            } else {
                (first as usize + r, 1)
            };
            let offset = first_index + mult_global - mult_local;
            coef.into_iter()
                .enumerate()
                .filter(|(_, c)| *c != 0.0)
                .map(|(k, c)| (offset + k, c))
                .collect()
        })
        .collect()
}

fn insert_knot(tau: &mut Vec<i64>, coef: &mut Vec<f64>, r: usize, z: i64) {
    let n = coef.len();
    let k = (0..tau.len() - 1)
        .rev()
        .find(|&k| tau[k] <= z && z < tau[k + 1])
        .expect("inserted knot lies inside the local knot span");
    let get = |c: &Vec<f64>, j: isize| -> f64 {
        if j < 0 || j as usize >= c.len() {
            0.0
        } else {
            c[j as usize]
        }
    };
    let mut out = vec![0.0; n + 1];
    for (j, o) in out.iter_mut().enumerate() {
        let ji = j as isize;
        *o = if j + r <= k {
            get(coef, ji)
        } else if j > k {
            get(coef, ji - 1)
        } else {
            let alpha = (z - tau[j]) as f64 / (tau[j + r] - tau[j]) as f64;
            alpha * get(coef, ji) + (1.0 - alpha) * get(coef, ji - 1)
        };
    }
    tau.insert(k + 1, z);
    *coef = out;
}
