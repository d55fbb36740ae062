use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("Z-surface undefined: no label has recorded samples")]
    SurfaceUndefined,

    #[error("CFTP did not coalesce within {max_sweeps} sweeps (theta = {theta}, lattice {rows}x{cols})")]
    NoCoalescence {
        theta: f64,
        rows: usize,
        cols: usize,
        max_sweeps: u64,
    },

    #[error("CFTP monotonicity violated at site {site} after sweep {sweep}")]
    MonotonicityViolated { site: usize, sweep: u64 },

    #[error("sum of squared residuals is zero; sigma^2 conditional is degenerate")]
    DegenerateResiduals,

    #[error("edge list line {line}: {message}")]
    EdgeList { line: usize, message: String },

    #[error("series has zero variance")]
    ZeroVariance,

    #[error("empty window: {0}")]
    EmptyWindow(String),

    #[error("state space too large to enumerate: 2^{bits} states (limit 2^{limit})")]
    StateSpaceTooLarge { bits: usize, limit: usize },

    #[error("quadrature supports at most 2 free coordinates, got {0}")]
    QuadratureDimension(usize),

    #[error("config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{phase} phase failed at iteration {iteration}: {source}")]
    Run {
        phase: String,
        iteration: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
