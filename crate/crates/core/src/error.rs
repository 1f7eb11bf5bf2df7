use thiserror::Error;

pub type Result<T> = std::result::Result<T, RdError>;

/// Everything that can go wrong while loading data or estimating.
///
/// Row numbers are 1-based data rows (the header is not counted).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum RdError {
    // data errors
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: cannot parse `{column}`: {message}")]
    ParseError {
        row: usize,
        column: String,
        message: String,
    },
    #[error("row {row}: sharp design requires d = 1(x >= c)")]
    SharpComplianceViolation { row: usize },
    #[error("row {row}: {message}")]
    InvalidRow { row: usize, message: String },
    #[error("cutoff {0} is not part of the dataset")]
    UnknownCutoff(f64),
    #[error("cutoff group {cutoff} has {count} observations, need at least 2")]
    SmallCutoffGroup { cutoff: f64, count: usize },
    #[error("io: {0}")]
    Io(String),

    // estimation errors
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("bandwidth must be positive, got {0}")]
    NonpositiveBandwidth(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("fits were not built on the same data view")]
    MismatchedViews,
    #[error("evaluation point {xbar} outside ({low}, {high}]")]
    XbarOutOfRange { xbar: f64, low: f64, high: f64 },
    #[error("weak first stage: {0:.4} < 0.05")]
    WeakFirstStage(f64),
    #[error("one-sided noncompliance violated at row {row}: treated below its cutoff")]
    ComplianceViolation { row: usize },
    #[error("unsupported bias polynomial order {0} (max 2)")]
    UnsupportedOrder(usize),
    #[error("covariate cell `{0}` is empty or lacks a required group")]
    EmptyCell(String),
    #[error("covariate cell `{cell}`: propensity {propensity:.4} outside [0.01, 0.99]")]
    SupportViolation { cell: String, propensity: f64 },
    #[error("all weights are zero")]
    DegenerateWeights,
    #[error("singular design matrix: {0}")]
    SingularDesign(String),
    #[error("local randomization windows overlap")]
    OverlappingWindows,
    #[error("eta must lie in (0, 0.1], got {0}")]
    InvalidEta(f64),
    #[error("studentized statistic has zero variance")]
    ZeroVariance,
    #[error("unknown estimator `{0}`")]
    EstimatorUnknown(String),
}

impl RdError {
    /// True for errors caused by the input data rather than the estimation.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            RdError::MissingColumn(_)
                | RdError::ParseError { .. }
                | RdError::SharpComplianceViolation { .. }
                | RdError::InvalidRow { .. }
                | RdError::UnknownCutoff(_)
                | RdError::SmallCutoffGroup { .. }
                | RdError::Io(_)
        )
    }
}

impl From<std::io::Error> for RdError {
    fn from(e: std::io::Error) -> Self {
        RdError::Io(e.to_string())
    }
}

impl From<csv::Error> for RdError {
    fn from(e: csv::Error) -> Self {
        RdError::Io(e.to_string())
    }
}
