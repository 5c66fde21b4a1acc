use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter box: {0}")]
    InvalidBox(String),

    #[error("parameter (da = {da}, pe = {pe}) lies outside the parameter box")]
    OutOfBox { da: f64, pe: f64 },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid time grid: {0}")]
    InvalidTimeGrid(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("singular system matrix (zero pivot at row {row})")]
    Singular { row: usize },

    #[error("reduced system is singular; the reduced basis is degenerate")]
    DegenerateBasis,

    #[error("coercivity lower bound {alpha} is not positive at (da = {da}, pe = {pe})")]
    NonCoercive { alpha: f64, da: f64, pe: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cannot fit kernel model: {0}")]
    CannotFit(String),

    #[error("unknown {kind} '{name}' (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("configuration error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config {
        line: Option<usize>,
        message: String,
    },

    #[error("malformed model file: {0}")]
    ModelFormat(String),

    #[error("malformed query log: {0}")]
    QueryLog(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(line: Option<usize>, message: impl Into<String>) -> Self {
        Error::Config {
            line,
            message: message.into(),
        }
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        match err.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::QueryLog(format!("{other:?}")),
        }
    }
}
