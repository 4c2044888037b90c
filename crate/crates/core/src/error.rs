use thiserror::Error;

/// Errors raised across the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid panel: {0}")]
    InvalidPanel(String),

    #[error("unit {unit}: population density required for the density-scaled transform")]
    MissingDensity { unit: String },

    #[error("unit {unit}: non-finite count at period {period}")]
    NonFiniteCount { unit: String, period: usize },

    #[error("evaluation set empty")]
    EmptyEvaluationSet,

    #[error("scale factor must be positive, got {0}")]
    NonPositiveScale(f64),

    #[error("invalid bandwidth {0}: must lie in (0, 1]")]
    InvalidBandwidth(f64),

    #[error("bandwidth too small: zero kernel mass at period {period}")]
    BandwidthTooSmall { period: usize },

    #[error("no observations in window around u = {u}")]
    EmptyWindow { u: f64 },

    #[error("matrix is not symmetric (|a_ij - a_ji| = {deviation:e})")]
    Asymmetric { deviation: f64 },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error(
        "power iteration did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NoConvergence {
        iterations: usize,
        lambda: f64,
        vector: Vec<f64>,
        residual: f64,
    },

    #[error("oracle is desk-scale only (N = {0} > 64)")]
    OracleTooLarge(usize),

    #[error("oracle is noiseless-only")]
    OracleNeedsNoiseless,

    #[error("degenerate spectrum{}", at_period(*.period))]
    DegenerateSpectrum { period: Option<usize> },

    #[error("at period {period}: {source}")]
    AtPeriod {
        period: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("unit {unit}: {source}")]
    ForUnit {
        unit: String,
        #[source]
        source: Box<Error>,
    },

    #[error("no feasible bandwidth")]
    NoFeasibleBandwidth,

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("no units survive filters")]
    NoUnitsSurvive,

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("line {line}: {message}")]
    Row { line: u64, message: String },

    #[error("need at least one full window of {window} periods, have {available}")]
    NotEnoughPeriods { window: usize, available: usize },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn at_period(period: Option<usize>) -> String {
    match period {
        Some(t) => format!(" at period {}", t + 1),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn at(self, period: usize) -> Error {
        Error::AtPeriod {
            period: period + 1,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
