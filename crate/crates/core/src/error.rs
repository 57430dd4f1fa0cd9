use thiserror::Error;

/// Problems with input data: portfolio rows, hierarchy files, embedding tables.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("row {row}: category path {path} is not in the hierarchy")]
    UnknownCategory { row: usize, path: String },
    #[error("row {row}: salary mass must be positive")]
    NonPositiveMass { row: usize },
    #[error("row {row}: claim amount must be non-negative")]
    NegativeAmount { row: usize },
    #[error("row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("hierarchy: {0}")]
    InvalidHierarchy(String),
    #[error("portfolio has no training records")]
    EmptyTrainingSet,
    #[error("embedding row {row}: expected dimension {expected}, found {found}")]
    DimensionMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("embedding key {0:?} appears more than once")]
    DuplicateKey(String),
    #[error("embedding for {0:?} is the zero vector")]
    ZeroVector(String),
    #[error("label {label:?} has no usable tokens ({skipped} out of vocabulary)")]
    NoUsableTokens { label: String, skipped: usize },
    #[error("no embedding for category {0:?}")]
    MissingEmbedding(String),
    #[error("no fitted effect for category {0:?}")]
    MissingEffect(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<csv::Error> for DataError {
    fn from(e: csv::Error) -> Self {
        let row = e
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or_default();
        DataError::MalformedRow {
            row,
            reason: e.to_string(),
        }
    }
}

impl From<std::io::Error> for DataError {
    fn from(e: std::io::Error) -> Self {
        DataError::Io(e.to_string())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProximityError {
    #[error("vectors have different dimensions ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("cosine-family metric is undefined for a zero vector")]
    ZeroVector,
    #[error("gaussian similarity needs a positive sigma")]
    MissingSigma,
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
    #[error("need at least two rows, got {0}")]
    TooFewRows(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("requested {k} clusters but only {available} distinct items")]
    KTooLarge { k: usize, available: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("vertex {0} has zero degree in the similarity graph")]
    IsolatedVertex(usize),
    #[error("eigen-decomposition failed: {0}")]
    EigensolverFailure(String),
    #[error("expected a {expected} matrix")]
    WrongMatrixKind { expected: &'static str },
    #[error(transparent)]
    Proximity(#[from] ProximityError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndexError {
    #[error("index needs {min} <= K <= {max}, got K = {k}")]
    KOutOfRange { k: usize, min: usize, max: usize },
    #[error("assignment covers {labels} items but data has {rows}")]
    LengthMismatch { labels: usize, rows: usize },
    #[error("index needs a dissimilarity matrix")]
    NotADistance,
    #[error(transparent)]
    Proximity(#[from] ProximityError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("mixed-model system is singular: {0}")]
    SingularSystem(String),
    #[error("no observations to fit")]
    NoData,
    #[error("inner category {0} appears under more than one outer category")]
    NotNested(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("predicted claim total is not positive")]
    NonPositivePrediction,
    #[error("no records to evaluate")]
    Empty,
}

/// Top-level error with the class used for CLI exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Proximity(#[from] ProximityError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("level {level}, parent {parent}: {source}")]
    AtLevel {
        level: usize,
        parent: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn at_level(self, level: usize, parent: impl Into<String>) -> Self {
        Error::AtLevel {
            level,
            parent: parent.into(),
            source: Box::new(self),
        }
    }

    /// Machine-readable error class.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Data(_) => "DataError",
            Error::Proximity(_) | Error::Cluster(_) | Error::Index(_) | Error::Fit(_) | Error::Eval(_) => {
                "NumericError"
            }
            Error::AtLevel { source, .. } => source.class(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
