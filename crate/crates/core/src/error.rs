use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KpError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("arclength {s} outside [0, {length}]")]
    OutOfRange { s: f64, length: f64 },
    #[error("midline not closed: |x(L) - x(0)| = {gap:e} exceeds {tol:e}")]
    NotClosed { gap: f64, tol: f64 },
    #[error("state violates local non-interpenetration (min margin {min_margin:e})")]
    Infeasible { min_margin: f64 },
    #[error("mesh is not watertight: {0}")]
    NotWatertight(String),
    #[error("voxel spacing {voxel_h:e} is too coarse for section bound {bound:e}")]
    ResolutionInsufficient { voxel_h: f64, bound: f64 },
    #[error("curves intersect or come within {0:e} of each other")]
    CurvesIntersect(f64),
    #[error("linking sum {value} is not resolved to an integer (residual {residual})")]
    UnresolvedLink { value: f64, residual: f64 },
    #[error("test loop '{0}' touches the tube")]
    InvalidLoop(String),
    #[error("degenerate triangle {0}")]
    DegenerateTriangle(usize),
    #[error("empty point set")]
    EmptyInput,
    #[error("film does not span the tube for loop '{0}'")]
    NotSpanning(String),
    #[error("link number changed from {expected} to {found}")]
    LinkChanged { expected: i64, found: i64 },
    #[error("closure restoration failed (residual {0:e})")]
    ClosureFailed(f64),
    #[error("not a converging constrained sequence: {0}")]
    NotConvergingSequence(String),
}

pub type Result<T> = std::result::Result<T, KpError>;
