//! Quasi-interpolation onto hierarchical spaces.

use std::collections::HashMap;
use std::sync::Arc;

use super::bspline::PieceCache;
use super::function::SplineFunction;
use super::space::HierarchicalSpace;
use crate::error::{AfemError, Result};
use crate::mesh::Cell;
use crate::poly::{eval_coeffs, invert_small, poly_eval, MonomialTable};
use crate::quadrature::gauss_legendre;
use crate::solver::{solve, SolveOptions};
use crate::Point;

/// A linear functional `f ↦ Σ w_i f(x_i)` supported on one active cell.
#[derive(Clone, Debug)]
pub struct DualFunctional {
    pub cell: Cell,
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
}

impl DualFunctional {
    pub fn apply(&self, f: &dyn Fn(Point) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(*x))
            .sum()
    }
}

/// Univariate local L² duals on single level cells.
pub(crate) struct DualCache {
    degree: usize,
    pieces: PieceCache,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// Dual polynomial values at the Gauss nodes, per (level, function, cell).
    duals: HashMap<(u32, usize, usize), Vec<f64>>,
}

impl DualCache {
    pub(crate) fn new(degree: usize) -> Self {
        let (nodes, weights) = gauss_legendre(degree + 2);
        DualCache {
            degree,
            pieces: PieceCache::new(degree),
            nodes,
            weights,
            duals: HashMap::new(),
        }
    }

    pub(crate) fn degree(&self) -> usize {
        self.degree
    }

    /// `∫ |ψ|` over the cell, in local coordinates.
    pub(crate) fn l1(&mut self, level: u32, p: usize, a: usize) -> f64 {
        let v = self.dual_values(level, p, a);
        v.iter().zip(&self.weights).map(|(v, w)| w * v.abs()).sum()
    }

    /// Values at the Gauss nodes of the dual of level function `p`
    /// restricted to level cell `a`.
    fn dual_values(&mut self, level: u32, p: usize, a: usize) -> Vec<f64> {
        if let Some(v) = self.duals.get(&(level, p, a)) {
            return v.clone();
        }
        let r = self.degree;
        let m = r + 1;
        let n = self.nodes.len();
        // Piece values at the nodes; the rule is exact for the degree-2r Gram entries.
        let vals: Vec<Vec<f64>> = (a..=a + r)
            .map(|q| {
                let piece = self.pieces.piece(level, q, a);
                self.nodes.iter().map(|&x| poly_eval(piece, x)).collect()
            })
            .collect();
        let mut gram = vec![0.0; m * m];
        for s in 0..m {
            for t in 0..m {
                gram[s * m + t] = (0..n).map(|i| self.weights[i] * vals[s][i] * vals[t][i]).sum();
            }
        }
        let inv = invert_small(&gram, m).expect("local B-spline Gram matrices are nonsingular");
        let row = p - a;
        let values: Vec<f64> = (0..n)
            .map(|i| (0..m).map(|t| inv[row * m + t] * vals[t][i]).sum())
            .collect();
        self.duals.insert((level, p, a), values.clone());
        values
    }

    fn functional(&mut self, space: &HierarchicalSpace, index: usize) -> DualFunctional {
        let key = space.key(index);
        let cell = space.dual_cell(index);
        let dx = self.dual_values(key.level, key.index[0], cell.i as usize);
        let dy = self.dual_values(key.level, key.index[1], cell.j as usize);
        let n = self.nodes.len();
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for a in 0..n {
            for b in 0..n {
                points.push(cell.from_local([self.nodes[a], self.nodes[b]]));
                weights.push(self.weights[a] * self.weights[b] * dx[a] * dy[b]);
            }
        }
        DualFunctional {
            cell,
            points,
            weights,
        }
    }
}

/// Dual functionals of a truncated space, one per basis function.
pub fn dual_functionals(space: &HierarchicalSpace) -> Vec<DualFunctional> {
    let mut cache = DualCache::new(space.degree());
    (0..space.dim()).map(|k| cache.functional(space, k)).collect()
}

/// Quasi-interpolant `I f`.
///
/// Truncated spaces use local duals of the function's own level on one
/// active cell; plain hierarchical spaces fall back to the global L²
/// projection, since local duals do not reproduce them.
pub fn quasi_interpolant(
    space: &Arc<HierarchicalSpace>,
    f: &dyn Fn(Point) -> f64,
) -> Result<SplineFunction> {
    if space.truncated() {
        let coeffs = dual_functionals(space).iter().map(|d| d.apply(f)).collect();
        SplineFunction::new(space.clone(), coeffs)
    } else {
        l2_projection(space, f)
    }
}

/// Global L² projection onto the space.
pub fn l2_projection(space: &Arc<HierarchicalSpace>, f: &dyn Fn(Point) -> f64) -> Result<SplineFunction> {
    let n = space.degree() + 2;
    let mass = crate::assembly::mass_matrix(space, n);
    let (nodes, weights) = gauss_legendre(n);
    let m = space.order();
    let mut rhs = vec![0.0; space.dim()];
    for (k, cell) in space.partition().cells().iter().enumerate() {
        let cb = space.cell_basis_at(k);
        let area = cell.area();
        for (&xa, &wa) in nodes.iter().zip(&weights) {
            let tx = MonomialTable::new(xa, m);
            for (&xb, &wb) in nodes.iter().zip(&weights) {
                let ty = MonomialTable::new(xb, m);
                let fv = f(cell.from_local([xa, xb])) * wa * wb * area;
                for (j, &dof) in cb.dofs.iter().enumerate() {
                    rhs[dof] += fv * eval_coeffs(cb.block(j, m), m, &tx, &ty, 0, 0);
                }
            }
        }
    }
    let opts = SolveOptions::default();
    let sol = solve(&mass, &rhs, &opts)?;
    SplineFunction::new(space.clone(), sol.x)
}

/// Represents `fun` in the finer space `fine`.
pub fn coarse_to_fine(fun: &SplineFunction, fine: &Arc<HierarchicalSpace>) -> Result<SplineFunction> {
    let coarse = fun.space();
    if coarse.degree() != fine.degree() {
        return Err(AfemError::NonNested(format!(
            "degrees differ: {} and {}",
            coarse.degree(),
            fine.degree()
        )));
    }
    if !fine.partition().is_refinement_of(coarse.partition()) {
        return Err(AfemError::NonNested(
            "the target partition does not refine the source partition".into(),
        ));
    }
    if fine.partition() == coarse.partition() && fine.truncated() == coarse.truncated() {
        return SplineFunction::new(fine.clone(), fun.coefficients().to_vec());
    }
    let eval = |x: Point| {
        let cell = coarse.partition().locate(x);
        crate::field::CellField::value(fun, &cell, x)
    };
    quasi_interpolant(fine, &eval)
}
