use thiserror::Error;

/// Errors raised while turning raw feature values into a normalized vector.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NormalizeError {
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("feature `{0}` is missing and has no default")]
    MissingFeature(String),
    #[error("feature `{name}` has non-numeric value `{value}`")]
    NonNumericValue { name: String, value: String },
    #[error("feature `{name}` has unrecognized category `{value}`")]
    UnknownCategory { name: String, value: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("invalid cost configuration: {0}")]
    Costs(String),
    #[error("invalid risk parameters: {0}")]
    Risk(String),
    #[error("invalid policy configuration: {0}")]
    Policy(String),
    #[error("invalid generator configuration: {0}")]
    Generator(String),
    #[error("invalid guideline rules: {0}")]
    Guideline(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundError {
    #[error("proportion {0} outside [0, 1]")]
    InvalidProportion(f64),
    #[error("sample count must be positive")]
    NonPositiveN,
    #[error("parameter `{name}` = {value} outside {range}")]
    Domain {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("hypothesis count overflows 128 bits")]
    Overflow,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TreeError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("no records carry an outcome for {0}")]
    NoObservedOutcomes(crate::model::Test),
    #[error("record lacks the outcome of {0}, which the tree queries")]
    MissingRequiredOutcome(crate::model::Test),
    #[error(transparent)]
    Bound(#[from] BoundError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClusterError {
    #[error("need at least two points to split, got {0}")]
    TooFewPoints(usize),
    #[error("precision must be positive")]
    InvalidPrecision,
    #[error("no centroids to assign to")]
    NoCentroids,
    #[error(transparent)]
    SchemaMismatch(#[from] SchemaMismatch),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("feature vectors have different lengths ({left} vs {right})")]
pub struct SchemaMismatch {
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("no feasible screening tree for the whole population: {0}")]
    PolicyInfeasible(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Schema(#[from] SchemaMismatch),
}

#[derive(Debug, Error)]
pub enum PolicyFileError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed policy file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported policy file version {0}")]
    Version(u32),
    #[error("fingerprint mismatch: stored {stored}, computed {computed}")]
    Fingerprint { stored: String, computed: String },
    #[error("partition {id} violates its training FNR bound: {reason}")]
    BoundViolated { id: usize, reason: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("outcome for {got} but the session awaits {expected}")]
    WrongTest {
        expected: crate::model::Test,
        got: crate::model::Test,
    },
    #[error("session already reached a final recommendation")]
    SessionFinal,
}

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("cannot read {path}: {source}")]
    UnreadableFile {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    UnwritableFile {
        path: String,
        source: std::io::Error,
    },
    #[error("missing or malformed header: {0}")]
    MissingHeader(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
