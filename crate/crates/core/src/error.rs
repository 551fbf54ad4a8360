use thiserror::Error;

/// Errors produced anywhere in the separation pipeline.
#[derive(Debug, Error)]
pub enum TbssError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid mode {mode} for a tensor of order {order}")]
    InvalidMode { mode: usize, order: usize },

    #[error("insufficient sample: need at least {needed} observations, got {got}")]
    InsufficientSample { needed: usize, got: usize },

    #[error("singular covariance: eigenvalue {eigenvalue:e} is below the threshold {threshold:e}")]
    SingularCovariance { eigenvalue: f64, threshold: f64 },

    #[error("mode {mode}: {source}")]
    InMode {
        mode: usize,
        #[source]
        source: Box<TbssError>,
    },

    #[error("k={k}: {source}")]
    AtBand {
        k: usize,
        #[source]
        source: Box<TbssError>,
    },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("band width k={k} outside 1..={p}")]
    InvalidBand { k: usize, p: usize },

    #[error("empty matrix set")]
    EmptySet,

    #[error("gain matrix row {0} is zero; the optimal scale is undefined")]
    ZeroRow(usize),

    #[error("brute-force MD index supports at most 8 dimensions, got {0}")]
    TooLarge(usize),

    #[error("vectorized estimators are capped at dimension {cap}, sample has rho={rho}")]
    VectorCap { rho: usize, cap: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed sample file: {0}")]
    Format(String),

    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl TbssError {
    /// Attaches a (1-based) mode index to an error.
    pub fn in_mode(self, mode: usize) -> Self {
        TbssError::InMode {
            mode,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, TbssError>;
