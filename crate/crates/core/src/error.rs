use thiserror::Error;

/// Errors surfaced by construction, marching, transforms, and file handling.
///
/// Validation failures (bad shapes, bad parameters, unparseable files) are
/// distinct from numerical failures (`NonFiniteBlowup`); the CLI maps the
/// former to exit code 1 and the latter to exit code 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain extent must be positive: {name} = {value}")]
    NonPositiveExtent { name: &'static str, value: f64 },

    #[error("need at least 2 intervals in each direction: N = {n}, M = {m}")]
    TooFewIntervals { n: usize, m: usize },

    #[error("CFL ratio tau/h = {ratio} exceeds the stability bound {max}; build the grid with allow_unstable to march anyway")]
    CflViolation { ratio: f64, max: f64 },

    #[error("shape mismatch: {context}")]
    ShapeMismatch { context: String },

    #[error("solution became non-finite at node i = {i}, layer j = {j}")]
    NonFiniteBlowup { i: usize, j: usize },

    #[error("wave speed must be strictly positive: c = {value} at sample {index}")]
    NonPositiveSpeed { index: usize, value: f64 },

    #[error("impedance must be strictly positive: sigma = {value} at sample {index}")]
    NonPositiveImpedance { index: usize, value: f64 },

    #[error("profile covers [{lo}, {hi}] but the target grid needs [0, {needed}]")]
    DomainTooShort { lo: f64, hi: f64, needed: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("i/o failure on {path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for failures of the numerics themselves, as opposed to rejected input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFiniteBlowup { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
