use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric: |h[{i}][{j}] - h[{j}][{i}]| = {dev:e}")]
    NotSymmetric { i: usize, j: usize, dev: f64 },

    #[error("matrix is not antisymmetric within tolerance: deviation {dev:e}")]
    NotAntisymmetric { dev: f64 },

    #[error("matrix is not orthonormal within tolerance: deviation {dev:e}")]
    NotOrthonormal { dev: f64 },

    #[error("non-finite entry encountered in {context}")]
    NonFinite { context: &'static str },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("antisymmetric canonical form needs an even dimension, got {dim}")]
    OddDimension { dim: usize },

    #[error("orthonormal matrix has determinant -1 and cannot fold to the identity")]
    DetMinusOne,

    #[error("rotation plane {plane} out of range for dimension {dim}")]
    PlaneOutOfRange { plane: usize, dim: usize },

    #[error("bond {bond} needs dimension {needed} but the cap is {cap} in exact mode")]
    BondOverflow {
        bond: usize,
        needed: usize,
        cap: usize,
    },

    #[error("gate does not conserve occupation parity: off-block weight {dev:e}")]
    GateParity { dev: f64 },

    #[error("problem size {n} exceeds the resource guard {max} for {context}")]
    ResourceGuard {
        context: &'static str,
        n: usize,
        max: usize,
    },

    #[error("pair-amplitude sign matching failed: best deviation {dev:e}")]
    SignMatch { dev: f64 },

    #[error("state integrity violated in {context}: residue {dev:e}")]
    Integrity { context: &'static str, dev: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("iterative solver did not converge: residual {residual:e} after {iterations} iterations")]
    NonConvergence { residual: f64, iterations: usize },

    #[error("linear algebra backend error: {0}")]
    Linalg(#[from] ndarray_linalg::error::LinalgError),

    #[error("snapshot i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("snapshot format error: {0}")]
    SnapshotFormat(String),
}
