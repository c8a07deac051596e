//! Hierarchical tensor-product B-splines.

pub mod bspline;
mod function;
mod io;
mod quasi;
mod space;

pub use function::SplineFunction;
pub(crate) use function::eval_physical;
pub use quasi::{coarse_to_fine, dual_functionals, l2_projection, quasi_interpolant, DualFunctional};
pub use space::{build_space, BasisKey, CellBasis, HierarchicalSpace};
