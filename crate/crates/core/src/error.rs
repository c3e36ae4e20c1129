use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize, usize),
        got: (usize, usize, usize),
    },

    #[error("incompatible Poisson problem: right-hand side mean {mean:.3e} is not zero")]
    IncompatiblePoisson { mean: f64 },

    #[error("barotropic constraint violated: z-mean of horizontal divergence is {residual:.3e}")]
    BarotropicViolation { residual: f64 },

    #[error("incompatible grids: {0}")]
    IncompatibleGrids(String),

    #[error("wrong system: expected {expected}, got {got}")]
    WrongSystem { expected: String, got: String },

    #[error("numerical blow-up at t = {t}: {reason}")]
    BlowUp { t: f64, reason: String },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("inequality falsified: rhs is zero but lhs = {lhs:.3e}")]
    Falsified { lhs: f64 },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("snapshot format error: {0}")]
    Snapshot(String),

    #[error("missing column: {0}")]
    MissingColumn(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
