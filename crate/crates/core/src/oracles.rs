//! Independent reference implementations used by the test suites.
//!
//! Everything here avoids the fast paths it is meant to check: projections
//! go through dense least squares in a monomial basis, mesh queries through
//! exhaustive pair scans, and derivatives through finite differences.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::mass_matrix;
use crate::error::{AfemError, Result};
use crate::field::ExactSolution;
use crate::mesh::{Cell, Partition};
use crate::quadrature::{gauss_cell, gauss_legendre};
use crate::splines::{bspline, BasisKey, HierarchicalSpace, SplineFunction};
use crate::Point;

/// A closed-form solution of the clamped plate problem and its load.
#[derive(Clone)]
pub struct ManufacturedProblem {
    pub exact: ExactSolution,
    pub f: Arc<dyn Fn(Point) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for ManufacturedProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("ManufacturedProblem { .. }")
    }
}

/// `u = sin²(πx) sin²(πy)`.
pub fn manufactured_sin2() -> ManufacturedProblem {
    // S(t) = sin²(πt) and its derivatives.
    fn s(t: f64, k: u32) -> f64 {
        let p = PI;
        match k {
            0 => (p * t).sin().powi(2),
            1 => p * (2.0 * p * t).sin(),
            2 => 2.0 * p * p * (2.0 * p * t).cos(),
            3 => -4.0 * p.powi(3) * (2.0 * p * t).sin(),
            4 => -8.0 * p.powi(4) * (2.0 * p * t).cos(),
            _ => unreachable!(),
        }
    }
    separable(s)
}

/// Shared body of the separable manufactured solutions `u = S(x) S(y)`,
/// with `s(t, k)` the `k`-th derivative of `S`.
fn separable(s: fn(f64, u32) -> f64) -> ManufacturedProblem {
    let exact = ExactSolution::new(
        move |x| s(x[0], 0) * s(x[1], 0),
        move |x| [s(x[0], 1) * s(x[1], 0), s(x[0], 0) * s(x[1], 1)],
        move |x| s(x[0], 2) * s(x[1], 0) + s(x[0], 0) * s(x[1], 2),
        move |x| {
            [
                s(x[0], 3) * s(x[1], 0) + s(x[0], 1) * s(x[1], 2),
                s(x[0], 2) * s(x[1], 1) + s(x[0], 0) * s(x[1], 3),
            ]
        },
    );
    let f = move |x: Point| s(x[0], 4) * s(x[1], 0) + 2.0 * s(x[0], 2) * s(x[1], 2) + s(x[0], 0) * s(x[1], 4);
    ManufacturedProblem {
        exact,
        f: Arc::new(f),
    }
}

/// `u = x²(1−x)² y²(1−y)²`, which lies in every clamped spline space of
/// degree at least 4.
pub fn manufactured_bubble() -> ManufacturedProblem {
    fn s(t: f64, k: u32) -> f64 {
        match k {
            0 => t * t * (1.0 - t) * (1.0 - t),
            1 => 2.0 * t - 6.0 * t * t + 4.0 * t.powi(3),
            2 => 2.0 - 12.0 * t + 12.0 * t * t,
            3 => -12.0 + 24.0 * t,
            4 => 24.0,
            _ => unreachable!(),
        }
    }
    separable(s)
}

/// Accuracy of a finite-difference stencil.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FdOrder {
    Second,
    Fourth,
}

/// Central-difference weights at offsets `-half..=half` for the `k`-th derivative.
fn stencil(k: u32, order: FdOrder) -> (i32, Vec<f64>) {
    match (order, k) {
        (_, 0) => (0, vec![1.0]),
        (FdOrder::Second, 1) => (1, vec![-0.5, 0.0, 0.5]),
        (FdOrder::Second, 2) => (1, vec![1.0, -2.0, 1.0]),
        (FdOrder::Second, 3) => (2, vec![-0.5, 1.0, 0.0, -1.0, 0.5]),
        (FdOrder::Second, 4) => (2, vec![1.0, -4.0, 6.0, -4.0, 1.0]),
        (FdOrder::Fourth, 1) => (2, vec![1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0]),
        (FdOrder::Fourth, 2) => (2, vec![-1.0 / 12.0, 4.0 / 3.0, -2.5, 4.0 / 3.0, -1.0 / 12.0]),
        (FdOrder::Fourth, 3) => (3, vec![0.125, -1.0, 1.625, 0.0, -1.625, 1.0, -0.125]),
        (FdOrder::Fourth, 4) => (
            3,
            vec![-1.0 / 6.0, 2.0, -6.5, 28.0 / 3.0, -6.5, 2.0, -1.0 / 6.0],
        ),
        _ => panic!("finite differences support derivative orders up to 4"),
    }
}

/// Tensor central difference of `g` for `∂^α` at `x`.
pub fn fd_derivative(g: &dyn Fn(Point) -> f64, x: Point, alpha: [u32; 2], step: f64, order: FdOrder) -> f64 {
    let (hx, wx) = stencil(alpha[0], order);
    let (hy, wy) = stencil(alpha[1], order);
    let mut sum = 0.0;
    for (a, cx) in wx.iter().enumerate() {
        if *cx == 0.0 {
            continue;
        }
        for (b, cy) in wy.iter().enumerate() {
            if *cy == 0.0 {
                continue;
            }
            let p = [
                x[0] + (a as i32 - hx) as f64 * step,
                x[1] + (b as i32 - hy) as f64 * step,
            ];
            sum += cx * cy * g(p);
        }
    }
    sum / step.powi((alpha[0] + alpha[1]) as i32)
}

/// Result of comparing an exact derivative with a finite difference.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdCheck {
    pub analytic: f64,
    pub numeric: f64,
    pub gap: f64,
}

/// Compares `∂^α fun(x)` with a second-order central difference. The stencil
/// must stay inside the active cell containing `x`.
pub fn fd_check(fun: &SplineFunction, x: Point, alpha: [u32; 2], step: f64) -> Result<FdCheck> {
    fd_check_with(fun, x, alpha, step, FdOrder::Second)
}

pub fn fd_check_with(fun: &SplineFunction, x: Point, alpha: [u32; 2], step: f64, order: FdOrder) -> Result<FdCheck> {
    let cell = fun.space().partition().locate(x);
    let (hx, _) = stencil(alpha[0], order);
    let (hy, _) = stencil(alpha[1], order);
    let [x0, x1, y0, y1] = cell.bounds();
    let (rx, ry) = (hx as f64 * step, hy as f64 * step);
    if x[0] - rx < x0 || x[0] + rx > x1 || x[1] - ry < y0 || x[1] + ry > y1 {
        return Err(AfemError::StencilCrossesCell { point: x });
    }
    let analytic = fun.eval_on(&cell, x, alpha)?;
    let g = |p: Point| fun.eval_on(&cell, p, [0, 0]).expect("order 0 is supported");
    let numeric = fd_derivative(&g, x, alpha, step, order);
    Ok(FdCheck {
        analytic,
        numeric,
        gap: (analytic - numeric).abs(),
    })
}

/// Dense L² projection of `v` on `cell` onto `ξ^a η^b`, `a, b < mp`, in
/// local coordinates, by least squares on an `n × n` Gauss grid.
pub fn dense_l2_projection(mp: usize, cell: &Cell, v: &dyn Fn(Point) -> f64, n: usize) -> Result<Vec<f64>> {
    let (nodes, weights) = gauss_legendre(n);
    let rows = n * n;
    let cols = mp * mp;
    let mut a = DMatrix::zeros(rows, cols);
    let mut b = DVector::zeros(rows);
    for i in 0..n {
        for j in 0..n {
            let k = i * n + j;
            let sw = (weights[i] * weights[j]).sqrt();
            for p in 0..mp {
                for q in 0..mp {
                    a[(k, p * mp + q)] = sw * nodes[i].powi(p as i32) * nodes[j].powi(q as i32);
                }
            }
            b[k] = sw * v(cell.from_local([nodes[i], nodes[j]]));
        }
    }
    let svd = a.svd(true, true);
    let smin = svd.singular_values.min();
    let smax = svd.singular_values.max();
    if !(smin > 1e-12 * smax) {
        return Err(AfemError::SingularGram(format!(
            "monomial Gram on {cell:?} has condition beyond 1e12"
        )));
    }
    let x = svd
        .solve(&b, 0.0)
        .map_err(|e| AfemError::SingularGram(e.to_string()))?;
    Ok(x.iter().copied().collect())
}

/// Dense Gram matrix and its inverse, the coefficients of the global dual basis.
#[derive(Clone, Debug)]
pub struct GlobalDual {
    pub gram: DMatrix<f64>,
    pub dual: DMatrix<f64>,
}

pub fn global_dual_basis(space: &HierarchicalSpace) -> Result<GlobalDual> {
    let n = space.dim();
    if n > 200 {
        return Err(AfemError::InvalidConfig(format!(
            "global dual basis is limited to 200 functions, space has {n}"
        )));
    }
    let mass = mass_matrix(space, space.degree() + 2);
    let gram = DMatrix::from_fn(n, n, |i, j| mass.get(i, j));
    let dual = gram
        .clone()
        .cholesky()
        .ok_or_else(|| AfemError::SingularGram("the basis Gram matrix is not positive definite".into()))?
        .inverse();
    Ok(GlobalDual { gram, dual })
}

/// Quasi-interpolant built from the global dual basis.
pub fn global_quasi_interpolant(
    space: &Arc<HierarchicalSpace>,
    dual: &GlobalDual,
    f: &dyn Fn(Point) -> f64,
) -> Result<SplineFunction> {
    let n = space.dim();
    let q = space.degree() + 2;
    let mut moments = DVector::zeros(n);
    for cell in space.partition().cells() {
        let rule = gauss_cell(cell, q);
        for (x, w) in rule.points.iter().zip(&rule.weights) {
            let fv = f(*x) * w;
            for k in space.cell_basis(cell).expect("active").dofs.iter() {
                let b = space.basis_poly(*k, cell).expect("supported");
                moments[*k] += fv * b.eval_local(cell.to_local(*x), 0, 0);
            }
        }
    }
    let c = &dual.dual * moments;
    SplineFunction::new(space.clone(), c.iter().copied().collect())
}

/// Spline with coefficients drawn uniformly from `[-1, 1]`.
pub fn random_spline(space: &Arc<HierarchicalSpace>, seed: u64) -> SplineFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = (0..space.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    SplineFunction::new(space.clone(), c).expect("length matches")
}

/// Random spline in the clamped subspace (zero coefficients elsewhere).
pub fn random_conforming_spline(space: &Arc<HierarchicalSpace>, seed: u64) -> SplineFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = vec![0.0; space.dim()];
    for &k in space.conforming_indices() {
        c[k] = rng.gen_range(-1.0..1.0);
    }
    SplineFunction::new(space.clone(), c).expect("length matches")
}

/// Hierarchical selection by geometry: a level-`l` function is kept when no
/// coarser active cell meets its support and some active level-`l` cell does.
pub fn brute_force_selection(p: &Partition, degree: usize) -> Vec<BasisKey> {
    let mut out = Vec::new();
    for level in 0..=p.max_level() {
        let n = bspline::num_functions(level, degree);
        let h = 1.0 / f64::from(1u32 << level);
        for px in 0..n {
            for py in 0..n {
                let (x0, x1) = bspline::support_cells(level, degree, px);
                let (y0, y1) = bspline::support_cells(level, degree, py);
                let rect = [x0 as f64 * h, (x1 + 1) as f64 * h, y0 as f64 * h, (y1 + 1) as f64 * h];
                let meeting: Vec<&Cell> = p.cells().iter().filter(|c| overlaps(&c.bounds(), &rect)).collect();
                let covered = meeting.iter().all(|c| c.level >= level);
                let touches_level = meeting.iter().any(|c| c.level == level);
                if covered && touches_level {
                    out.push(BasisKey {
                        level,
                        index: [px, py],
                    });
                }
            }
        }
    }
    out.sort_unstable();
    out
}

fn overlaps(a: &[f64; 4], b: &[f64; 4]) -> bool {
    a[0] < b[1] && b[0] < a[1] && a[2] < b[3] && b[2] < a[3]
}

/// Segment shared by two closed cells, if it has positive length:
/// `(start, end)` with `start < end` lexicographically.
fn shared_segment(a: &Cell, b: &Cell) -> Option<(Point, Point)> {
    let [ax0, ax1, ay0, ay1] = a.bounds();
    let [bx0, bx1, by0, by1] = b.bounds();
    let (lo_x, hi_x) = (ax0.max(bx0), ax1.min(bx1));
    let (lo_y, hi_y) = (ay0.max(by0), ay1.min(by1));
    if lo_x == hi_x && lo_y < hi_y {
        Some(([lo_x, lo_y], [lo_x, hi_y]))
    } else if lo_y == hi_y && lo_x < hi_x {
        Some(([lo_x, lo_y], [hi_x, lo_y]))
    } else {
        None
    }
}

/// Interior facets by exhaustive pair matching: `(start, end, lower, upper)`.
pub fn brute_force_interior_edges(p: &Partition) -> Vec<(Point, Point, Cell, Cell)> {
    let cells = p.cells();
    let mut out = Vec::new();
    for (k, a) in cells.iter().enumerate() {
        for b in &cells[k + 1..] {
            if let Some((s, e)) = shared_segment(a, b) {
                let (lo, hi) = if a < b { (*a, *b) } else { (*b, *a) };
                out.push((s, e, lo, hi));
            }
        }
    }
    out.sort_by(|x, y| {
        (x.0[0], x.0[1], x.1[0], x.1[1])
            .partial_cmp(&(y.0[0], y.0[1], y.1[0], y.1[1]))
            .expect("finite coordinates")
    });
    out
}

/// Number of edge-adjacent active cell pairs whose levels differ by more than one.
pub fn grading_violations(p: &Partition) -> usize {
    brute_force_interior_edges(p)
        .iter()
        .filter(|(_, _, a, b)| a.level.abs_diff(b.level) > 1)
        .count()
}

/// True when the active cells have disjoint interiors and cover the square.
pub fn is_disjoint_cover(p: &Partition) -> bool {
    let cells = p.cells();
    let area: f64 = cells.iter().map(Cell::area).sum();
    if (area - 1.0).abs() > 1e-12 {
        return false;
    }
    for (k, a) in cells.iter().enumerate() {
        for b in &cells[k + 1..] {
            if overlaps(&a.bounds(), &b.bounds()) {
                return false;
            }
        }
    }
    true
}

/// Support extension by sampling every basis function on every cell.
pub fn brute_force_support_extension(space: &Arc<HierarchicalSpace>, cell: &Cell) -> BTreeSet<Cell> {
    let samples = [[0.3, 0.3], [0.7, 0.3], [0.3, 0.7], [0.7, 0.7], [0.5, 0.5]];
    let nonzero_on = |k: usize, c: &Cell| {
        let b = SplineFunction::basis(space.clone(), k);
        samples
            .iter()
            .any(|xi| b.eval_on(c, c.from_local(*xi), [0, 0]).expect("order 0").abs() > 1e-14)
    };
    let cells = space.partition().cells();
    let mut out = BTreeSet::new();
    for k in 0..space.dim() {
        if nonzero_on(k, cell) {
            for c in cells {
                if nonzero_on(k, c) {
                    out.insert(*c);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::CellField;

    #[test]
    fn sin2_boundary_and_centre() {
        let m = manufactured_sin2();
        let c = Cell::ROOT;
        assert!((m.exact.value(&c, [0.5, 0.5]) - 1.0).abs() < 1e-15);
        for k in 0..100 {
            let t = k as f64 / 99.0;
            for (x, n) in [([t, 0.0], [0.0, -1.0]), ([t, 1.0], [0.0, 1.0]), ([0.0, t], [-1.0, 0.0]), ([1.0, t], [1.0, 0.0])] {
                let g = m.exact.gradient(&c, x);
                assert!(m.exact.value(&c, x).abs() <= 1e-12);
                assert!((g[0] * n[0] + g[1] * n[1]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn sin2_derivatives_match_finite_differences() {
        let m = manufactured_sin2();
        let u = m.exact.u.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let x = [rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9)];
            let g = |p: Point| u(p);
            let h = 1e-2;
            let fd = fd_derivative(&g, x, [4, 0], h, FdOrder::Fourth)
                + 2.0 * fd_derivative(&g, x, [2, 2], h, FdOrder::Fourth)
                + fd_derivative(&g, x, [0, 4], h, FdOrder::Fourth);
            let f = (m.f)(x);
            assert!((fd - f).abs() <= 1e-4 * f.abs().max(PI.powi(4)), "f {f} fd {fd}");

            let h = 1e-4;
            let lap = fd_derivative(&g, x, [2, 0], h, FdOrder::Second) + fd_derivative(&g, x, [0, 2], h, FdOrder::Second);
            let exact = (m.exact.lap)(x);
            assert!((lap - exact).abs() <= 1e-6 * exact.abs().max(1.0), "lap {exact} fd {lap}");

            let gl = (m.exact.grad_lap)(x);
            let h = 1e-3;
            let fd = fd_derivative(&g, x, [3, 0], h, FdOrder::Fourth) + fd_derivative(&g, x, [1, 2], h, FdOrder::Fourth);
            assert!((fd - gl[0]).abs() <= 1e-4 * gl[0].abs().max(PI.powi(3)));
            let grad = (m.exact.grad)(x);
            let fd = fd_derivative(&g, x, [0, 1], h, FdOrder::Fourth);
            assert!((fd - grad[1]).abs() <= 1e-6);
        }
    }

    #[test]
    fn fd_of_simple_functions() {
        let sq = |p: Point| p[0] * p[0];
        assert!((fd_derivative(&sq, [0.3, 0.4], [2, 0], 1e-3, FdOrder::Second) - 2.0).abs() < 1e-10);
        let one = |_: Point| 1.0;
        for a in 0..=2 {
            for b in 0..=2 {
                if a + b > 0 {
                    assert!(fd_derivative(&one, [0.5, 0.5], [a, b], 1e-3, FdOrder::Second).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn dense_projection_reproduces_polynomials() {
        let cell = Cell::new(2, 1, 3);
        // v = 2 + 3ξ - ξη in local coordinates
        let v = |x: Point| {
            let xi = cell.to_local(x);
            2.0 + 3.0 * xi[0] - xi[0] * xi[1]
        };
        let c = dense_l2_projection(2, &cell, &v, 4).unwrap();
        let expect = [2.0, 0.0, 3.0, -1.0];
        for (a, b) in c.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        let z = dense_l2_projection(3, &cell, &|_| 0.0, 5).unwrap();
        assert!(z.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn brute_force_edges_small_meshes() {
        assert_eq!(brute_force_interior_edges(&crate::mesh::uniform_partition(1)).len(), 4);
        let p = crate::mesh::uniform_partition(1).refine(&[Cell::new(1, 0, 0)]).unwrap();
        assert_eq!(brute_force_interior_edges(&p).len(), 10);
        assert_eq!(grading_violations(&p), 0);
        assert!(is_disjoint_cover(&p));
    }
}
