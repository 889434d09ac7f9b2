use chrono::NaiveDate;
use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum WindvolError {
    #[error("missing cell for station {station} on {date}")]
    MissingCell { date: NaiveDate, station: String },
    #[error("duplicate row for station {station} on {date}")]
    DuplicateRow { date: NaiveDate, station: String },
    #[error("dates are not daily spaced: gap between {prev} and {next}")]
    NonDailySpacing { prev: NaiveDate, next: NaiveDate },
    #[error("unparseable value at line {line}: {detail}")]
    UnparseableValue { line: u64, detail: String },
    #[error("empty panel")]
    EmptyPanel,
    #[error("latitude {0} outside projection domain (|lat| >= 89)")]
    OutOfDomain(f64),
    #[error("split boundary {0} outside the panel date range")]
    BoundaryOutsideRange(NaiveDate),

    #[error("series too short: length {len}, need at least {need}")]
    SeriesTooShort { len: usize, need: usize },
    #[error("non-finite value in input series")]
    NonFinite,
    #[error("degenerate (constant) input series")]
    DegenerateVariance,
    #[error("station {station}: {source}")]
    Station {
        station: String,
        #[source]
        source: Box<WindvolError>,
    },

    #[error("k = {k} too large for {n} stations")]
    KTooLarge { k: usize, n: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("undefined direction: resultant vector length below tolerance")]
    UndefinedDirection,

    #[error("too few observations: {len} with {lags} lags")]
    TooFewObservations { len: usize, lags: usize },
    #[error("singular regression")]
    SingularRegression,
    #[error("all weights are zero")]
    AllZeroWeights,
    #[error("constant values in cross-section")]
    ConstantValues,
    #[error("constant series")]
    ConstantSeries,
    #[error("empty list")]
    EmptyList,

    #[error("degenerate input for volatility fit")]
    DegenerateInput,
    #[error("optimizer failed to converge: {0}")]
    NonConvergence(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("all residuals are zero")]
    AllZeroResiduals,

    #[error("invalid EWMA lambda {0}: must lie in (0,1)")]
    BadLambda(f64),
    #[error("series too short for a 5-day window: {0}")]
    TooShort(usize),
    #[error("all proxy cells excluded from scoring")]
    AllExcluded,

    #[error("missing upstream artifact: {0}")]
    MissingUpstream(String),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("dataset unavailable: {0}")]
    DataUnavailable(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl WindvolError {
    pub fn at_station(self, station: &str) -> Self {
        WindvolError::Station {
            station: station.to_string(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, WindvolError>;
