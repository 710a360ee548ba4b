use thiserror::Error;

/// Crate-wide error type. Variants distinguish bad caller input from
/// numerical degeneracy so downstream tooling can map them to exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{context}: matrix must have at least one row and one column")]
    EmptyMatrix { context: &'static str },

    #[error("{context}: non-finite entry at row {row}, column {col}")]
    NonFinite {
        context: &'static str,
        row: usize,
        col: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("design matrix is numerically rank-deficient (smallest/largest singular value = {ratio:.3e})")]
    DegenerateDesign { ratio: f64 },

    #[error("matrix columns are not orthonormal (defect {defect:.3e})")]
    NotOrthonormal { defect: f64 },

    #[error("subspace is not contained in the reference subspace (residual {residual:.3e})")]
    NotContained { residual: f64 },

    #[error("coefficient matrix has no nonzero rows; the empty model has no structural pattern")]
    EmptyModel,

    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("too many discarded draws: {discarded} of {attempted} exceeded the 10% budget")]
    ExcessiveDiscards { discarded: usize, attempted: usize },

    #[error("no candidates supplied")]
    NoCandidates,

    #[error("every candidate was excluded: {0}")]
    AllExcluded(String),

    #[error("csv error: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, Error>;
