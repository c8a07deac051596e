use std::sync::Arc;

use super::space::HierarchicalSpace;
use crate::error::{AfemError, Result};
use crate::field::CellField;
use crate::mesh::Cell;
use crate::poly::{check_order, TensorPoly};
use crate::Point;

/// A spline `Σ c_λ B_λ` in a hierarchical space.
#[derive(Clone, Debug)]
pub struct SplineFunction {
    space: Arc<HierarchicalSpace>,
    coeffs: Vec<f64>,
}

impl SplineFunction {
    pub fn new(space: Arc<HierarchicalSpace>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.dim() {
            return Err(AfemError::DimensionMismatch {
                expected: space.dim(),
                found: coeffs.len(),
            });
        }
        Ok(SplineFunction { space, coeffs })
    }

    pub fn zero(space: Arc<HierarchicalSpace>) -> Self {
        let n = space.dim();
        SplineFunction {
            space,
            coeffs: vec![0.0; n],
        }
    }

    /// The basis function with index `index`.
    pub fn basis(space: Arc<HierarchicalSpace>, index: usize) -> Self {
        let mut f = Self::zero(space);
        f.coeffs[index] = 1.0;
        f
    }

    pub fn space(&self) -> &Arc<HierarchicalSpace> {
        &self.space
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coefficients(self) -> Vec<f64> {
        self.coeffs
    }

    /// Local polynomial on an active cell of the space, or on the active
    /// cell containing `cell` when `cell` is finer than the space's mesh.
    pub fn cell_poly(&self, cell: &Cell) -> (Cell, TensorPoly) {
        let owner = self
            .space
            .partition()
            .active_ancestor(cell)
            .unwrap_or_else(|| panic!("{cell:?} is not covered by a single active cell"));
        let m = self.space.order();
        let cb = self.space.cell_basis(&owner).expect("owner is active");
        let mut p = TensorPoly::zero(m);
        for (k, &dof) in cb.dofs.iter().enumerate() {
            let c = self.coeffs[dof];
            if c != 0.0 {
                p.axpy(c, cb.block(k, m));
            }
        }
        (owner, p)
    }

    /// `∂^α` at `x`, using the active cell that contains `x`.
    pub fn eval(&self, x: Point, alpha: [u32; 2]) -> Result<f64> {
        let cell = self.space.partition().locate(x);
        self.eval_on(&cell, x, alpha)
    }

    /// `∂^α` at `x` using the polynomial piece of `cell`.
    pub fn eval_on(&self, cell: &Cell, x: Point, alpha: [u32; 2]) -> Result<f64> {
        check_order(alpha)?;
        let (owner, p) = self.cell_poly(cell);
        Ok(eval_physical(&owner, &p, x, alpha))
    }
}

/// Physical derivative of a local polynomial on `cell`.
pub(crate) fn eval_physical(cell: &Cell, p: &TensorPoly, x: Point, alpha: [u32; 2]) -> f64 {
    let xi = cell.to_local(x);
    let scale = f64::from(cell.cells_per_side()).powi((alpha[0] + alpha[1]) as i32);
    scale * p.eval_local(xi, alpha[0] as usize, alpha[1] as usize)
}

impl CellField for SplineFunction {
    fn value(&self, cell: &Cell, x: Point) -> f64 {
        let (owner, p) = self.cell_poly(cell);
        eval_physical(&owner, &p, x, [0, 0])
    }

    fn gradient(&self, cell: &Cell, x: Point) -> [f64; 2] {
        let (owner, p) = self.cell_poly(cell);
        [
            eval_physical(&owner, &p, x, [1, 0]),
            eval_physical(&owner, &p, x, [0, 1]),
        ]
    }

    fn laplacian(&self, cell: &Cell, x: Point) -> f64 {
        let (owner, p) = self.cell_poly(cell);
        eval_physical(&owner, &p, x, [2, 0]) + eval_physical(&owner, &p, x, [0, 2])
    }

    fn grad_laplacian(&self, cell: &Cell, x: Point) -> [f64; 2] {
        let (owner, p) = self.cell_poly(cell);
        [
            eval_physical(&owner, &p, x, [3, 0]) + eval_physical(&owner, &p, x, [1, 2]),
            eval_physical(&owner, &p, x, [2, 1]) + eval_physical(&owner, &p, x, [0, 3]),
        ]
    }
}
