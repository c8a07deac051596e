use crate::mesh::Cell;

/// Errors raised by the adaptive pipeline.
#[derive(Debug, thiserror::Error)]
pub enum AfemError {
    #[error("marked cell {0:?} is not active in the partition (stale marking)")]
    StaleMarking(Cell),

    #[error("derivative order {0} is not supported (maximum total order is 4)")]
    UnsupportedDerivative(u32),

    #[error("the conforming subspace is empty; the mesh is too coarse for degree {degree}, use a finer initial mesh")]
    EmptyConformingSpace { degree: usize },

    #[error("matrix is not positive definite: pivot {pivot} has value {value:e}; increase the stabilization parameters gamma1/gamma2")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("spaces are not nested: {0}")]
    NonNested(String),

    #[error("an exact solution is required for {0}")]
    MissingExactSolution(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("finite-difference stencil at {point:?} crosses a cell boundary")]
    StencilCrossesCell { point: [f64; 2] },

    #[error("singular Gram matrix: {0}")]
    SingularGram(String),

    #[error("operation is not defined in {0} mode")]
    UnsupportedMode(&'static str),

    #[error("solver did not converge: residual measure {residual:e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = AfemError> = std::result::Result<T, E>;
