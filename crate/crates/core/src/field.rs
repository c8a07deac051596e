//! Functions that can be evaluated piecewise on cells.

use std::fmt;
use std::sync::Arc;

use crate::mesh::Cell;
use crate::Point;

/// A function with the derivatives needed by the biharmonic forms.
///
/// `cell` names the piece used at `x`; this selects one-sided limits on
/// cell boundaries. Smooth functions ignore it.
pub trait CellField {
    fn value(&self, cell: &Cell, x: Point) -> f64;
    fn gradient(&self, cell: &Cell, x: Point) -> [f64; 2];
    fn laplacian(&self, cell: &Cell, x: Point) -> f64;
    fn grad_laplacian(&self, cell: &Cell, x: Point) -> [f64; 2];
}

type Scalar = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
type Vector = Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>;

/// Closed-form solution with `u`, `∇u`, `Δu` and `∇Δu`.
#[derive(Clone)]
pub struct ExactSolution {
    pub u: Scalar,
    pub grad: Vector,
    pub lap: Scalar,
    pub grad_lap: Vector,
}

impl fmt::Debug for ExactSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ExactSolution { .. }")
    }
}

impl ExactSolution {
    pub fn new(
        u: impl Fn(Point) -> f64 + Send + Sync + 'static,
        grad: impl Fn(Point) -> [f64; 2] + Send + Sync + 'static,
        lap: impl Fn(Point) -> f64 + Send + Sync + 'static,
        grad_lap: impl Fn(Point) -> [f64; 2] + Send + Sync + 'static,
    ) -> Self {
        ExactSolution {
            u: Arc::new(u),
            grad: Arc::new(grad),
            lap: Arc::new(lap),
            grad_lap: Arc::new(grad_lap),
        }
    }

    pub fn zero() -> Self {
        Self::new(|_| 0.0, |_| [0.0; 2], |_| 0.0, |_| [0.0; 2])
    }

    /// `c·u`.
    pub fn scaled(&self, c: f64) -> Self {
        let (u, g, l, gl) = (self.u.clone(), self.grad.clone(), self.lap.clone(), self.grad_lap.clone());
        Self::new(
            move |x| c * u(x),
            move |x| g(x).map(|v| c * v),
            move |x| c * l(x),
            move |x| gl(x).map(|v| c * v),
        )
    }
}

impl CellField for ExactSolution {
    fn value(&self, _: &Cell, x: Point) -> f64 {
        (self.u)(x)
    }
    fn gradient(&self, _: &Cell, x: Point) -> [f64; 2] {
        (self.grad)(x)
    }
    fn laplacian(&self, _: &Cell, x: Point) -> f64 {
        (self.lap)(x)
    }
    fn grad_laplacian(&self, _: &Cell, x: Point) -> [f64; 2] {
        (self.grad_lap)(x)
    }
}

/// `a − b`, evaluated piecewise.
pub struct Difference<'a> {
    pub a: &'a dyn CellField,
    pub b: &'a dyn CellField,
}

impl CellField for Difference<'_> {
    fn value(&self, c: &Cell, x: Point) -> f64 {
        self.a.value(c, x) - self.b.value(c, x)
    }
    fn gradient(&self, c: &Cell, x: Point) -> [f64; 2] {
        let (p, q) = (self.a.gradient(c, x), self.b.gradient(c, x));
        [p[0] - q[0], p[1] - q[1]]
    }
    fn laplacian(&self, c: &Cell, x: Point) -> f64 {
        self.a.laplacian(c, x) - self.b.laplacian(c, x)
    }
    fn grad_laplacian(&self, c: &Cell, x: Point) -> [f64; 2] {
        let (p, q) = (self.a.grad_laplacian(c, x), self.b.grad_laplacian(c, x));
        [p[0] - q[0], p[1] - q[1]]
    }
}
