//! Adaptive finite elements for the clamped plate problem `Δ²u = f` on the unit
//! square, with `u = ∂u/∂ν = 0` on the boundary.
//!
//! The crate follows the usual adaptive loop
//!
//! ```text
//! SOLVE -> ESTIMATE -> MARK -> REFINE
//! ```
//!
//! on graded quadtree meshes carrying hierarchical (optionally truncated)
//! tensor B-spline spaces of degree `r >= 2`. Two discretizations are
//! supported: a conforming Galerkin method on the subspace of splines that
//! satisfy the clamped boundary conditions, and a Nitsche method on the full
//! spline space with a projected-Laplacian boundary form.
//!
//! Module map:
//!
//! * [`mesh`]: cells, graded partitions, edges, refinement with closure.
//! * [`splines`]: hierarchical spaces, spline functions, quasi-interpolation.
//! * [`quadrature`]: Gauss-Legendre rules on cells and edges.
//! * [`assembly`]: bilinear forms, load vectors, projections and mesh norms.
//! * [`solver`]: sparse symmetric direct and iterative solvers.
//! * [`estimator`]: residual indicators, oscillation and Dörfler marking.
//! * [`driver`]: the adaptive loop and convergence bookkeeping.
//! * [`oracles`]: independent reference implementations used for verification.

pub mod assembly;
pub mod driver;
pub mod error;
pub mod estimator;
pub mod field;
pub mod mesh;
pub mod oracles;
pub mod poly;
pub mod quadrature;
pub mod solver;
pub mod splines;

pub use assembly::{
    assemble, inconsistency_apply, mesh_norm, project_laplacian, triple_norm, DiscreteSystem,
    DofMap, FormParams, LoadVector, Mode, PiecewisePoly, SystemMatrix, TraceNorm,
};
pub use driver::{
    contraction_ratios, effectivity, pythagoras_check, run, run_observed, AfemConfig,
    ConvergenceRecord, IterationState, Problem,
};
pub use error::{AfemError, Result};
pub use estimator::{dorfler_mark, estimate_all, indicator, CellIndicator, Indicators, MarkedSet};
pub use field::{CellField, ExactSolution};
pub use mesh::{uniform_partition, Cell, Edge, EdgeKind, EdgeSet, Partition, ShapeReport};
pub use quadrature::{gauss_cell, gauss_edge, QuadratureRule};
pub use solver::{solve, SolveMethod, SolveOptions, Solution};
pub use splines::{build_space, coarse_to_fine, HierarchicalSpace, SplineFunction};

/// A point of the unit square.
pub type Point = [f64; 2];

/// Largest supported spline degree.
pub const MAX_DEGREE: usize = 5;
