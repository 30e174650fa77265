use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: {0}x{1}")]
    NotSquare(usize, usize),

    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NonHermitian(f64),

    #[error("not a density matrix: {0}")]
    NotDensity(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("function undefined at eigenvalue {0}")]
    DomainError(f64),

    #[error("support of rho is not contained in support of sigma")]
    SupportViolation,

    #[error("eigenvalue differences are not compatible with period {0}")]
    PeriodMismatch(f64),

    #[error("window radius {delta} is smaller than the grid spacing {spacing}")]
    WindowTooCoarse { delta: f64, spacing: f64 },

    #[error("invalid window: {0}")]
    InvalidWindow(String),

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("invalid family: {0}")]
    InvalidFamily(String),

    #[error("grid mismatch: expected {expected} points, found {found}")]
    GridMismatch { expected: usize, found: usize },

    #[error("invalid POVM: {0}")]
    InvalidPovm(String),

    #[error("solver diverged: {0}")]
    SolverDiverged(String),

    #[error("problem too large: {0}")]
    SizeGuard(String),

    #[error("target {target} unreachable (best value {best})")]
    Unreachable { target: f64, best: f64 },

    #[error("no pair of grid points is separated by more than twice the window")]
    NoValidPair,

    #[error("shifts are not separated by more than twice the window")]
    ShiftOverlap,

    #[error("diagonal acceptance vanishes")]
    ZeroDiagonalAcceptance,

    #[error("Kraus operators are not trace preserving (deviation {0:.3e})")]
    KrausIncomplete(f64),

    #[error("delta {0} out of range")]
    DeltaOutOfRange(f64),

    #[error("eigenvector entry {index} is negative ({value:.3e})")]
    PositivityViolation { index: usize, value: f64 },

    #[error("success probability is numerically 1 at every point")]
    Saturated,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
