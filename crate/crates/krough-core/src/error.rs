use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid Hurst configuration: {0}")]
    InvalidHurst(String),
    #[error("singular argument: {0}")]
    SingularArgument(String),
    #[error(
        "quadrature did not converge (value {value:e}, error estimate {error:e}, cells {cells})"
    )]
    NonConvergence {
        value: f64,
        error: f64,
        cells: usize,
    },
    #[error("regime mismatch: {0}")]
    RegimeMismatch(String),
    #[error("time must be positive, got {0}")]
    NonpositiveTime(f64),
    #[error("Fourier transform of the heat kernel is singular at the origin")]
    OriginSingularity,
    #[error("partition of unity residual {0:e} exceeds tolerance")]
    PartitionResidual(f64),
    #[error("series tail bound {bound:e} exceeds requested accuracy {requested:e}")]
    TailBound { bound: f64, requested: f64 },
    #[error("under-resolved: {0}")]
    UnderResolved(String),
    #[error("malformed grid: {0}")]
    MalformedGrid(String),
    #[error("bandwidth too small: {0}")]
    Bandwidth(String),
    #[error("non-finite state: {0}")]
    NonFinite(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
