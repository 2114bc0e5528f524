use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("velocity grid does not contain the zero velocity")]
    NoZeroVelocity,

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("threshold must be nonnegative, got {0}")]
    NegativeThreshold(f64),

    #[error("matrix entries must be finite and nonnegative")]
    NotNonnegative,

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("iterate became non-finite at iteration {0}")]
    Diverged(usize),

    #[error("line search stalled at iteration {iteration}: step fell below {alpha_min:e}")]
    LineSearchFailed { iteration: usize, alpha_min: f64 },

    #[error("target velocity ({0}, {1}) m/s is not on the velocity grid")]
    OffGridVelocity(f64, f64),

    #[error("pixel (row {row}, col {col}) lies outside the scene grid")]
    PixelOutOfGrid { row: usize, col: usize },

    #[error("two targets occupy pixel index {0}")]
    PixelCollision(usize),

    #[error("scene has no moving targets")]
    NoMovers,

    #[error("measurements are identically zero")]
    ZeroData,

    #[error("SCNR of {requested_db} dB is unreachable: clutter alone limits it to {max_db} dB")]
    ScnrUnreachable { requested_db: f64, max_db: f64 },

    #[error("scene grid too small: {0}")]
    GridTooSmall(String),

    #[error("requested {requested} movers but the scene has only {available} pixels")]
    TooManyMovers { requested: usize, available: usize },

    #[error("file format error: {0}")]
    Format(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
