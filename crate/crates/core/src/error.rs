use thiserror::Error;

use crate::models::BlockKind;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("model must contain at least one block")]
    EmptyModel,
    #[error("at most one {0} block is allowed")]
    DuplicateSingletonBlock(BlockKind),
    #[error("AR1 blocks must have distinct coefficients (rho = {0} repeated)")]
    DuplicateRho(f64),
    #[error("spatial blocks must have distinct ranges (phi = {0} repeated)")]
    DuplicatePhi(f64),
    #[error("time-series and spatial blocks cannot be mixed")]
    MixedDomain,
    #[error("spatial blocks must all be exponential or all Gaussian")]
    HeterogeneousSpatial,
    #[error("parameter {name} = {value} is outside its admissible range {range}")]
    ParamOutOfRange {
        name: String,
        value: f64,
        range: &'static str,
    },
    #[error("parameter vector has length {got}, model expects {expected}")]
    ParamLength { expected: usize, got: usize },
    #[error("{0} block is not second-order stationary; its autocovariance is undefined")]
    NonstationaryBlock(BlockKind),
    #[error("operation requires a time-series model, got a spatial one")]
    SpatialModel,
    #[error("operation requires a spatial model, got a time-series one")]
    TimeSeriesModel,
    #[error("scale 2^{level} exceeds the configured cap {cap}")]
    ScaleOverflow { level: u32, cap: u64 },
    #[error("{rows} moment conditions cannot identify {params} parameters")]
    InsufficientAbscissae { rows: usize, params: usize },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("{0} components exceed the verified range (at most 4); pass allow_unverified")]
    TooManyComponents(usize),
    #[error("series of length {len} is too short for {levels} wavelet scales")]
    SeriesTooShort { len: usize, levels: u32 },
    #[error("lag {lag} is not smaller than the series length {len}")]
    LagTooLarge { lag: usize, len: usize },
    #[error("{scales} wavelet scales cannot identify {params} parameters")]
    InsufficientScales { scales: usize, params: usize },
    #[error("{lags} autocovariance lags cannot identify {params} parameters")]
    InsufficientLags { lags: usize, params: usize },
    #[error("weight matrix is {rows}x{cols}, expected {expected}x{expected}")]
    WeightShape { rows: usize, cols: usize, expected: usize },
    #[error("at least 2 replications per cell are required, got {0}")]
    InsufficientReplications(usize),
    #[error("covariance factorization failed after {attempts} jitter attempts")]
    FactorizationFailure { attempts: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o failure: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}
