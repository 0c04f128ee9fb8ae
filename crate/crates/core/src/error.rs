use thiserror::Error;

/// Errors raised by the estimators and the simulation harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("treatment column contains a value other than 0 or 1 (row {row}: {value})")]
    NonBinaryTreatment { row: usize, value: f64 },
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: String,
        expected: usize,
        got: usize,
    },
    #[error("missing or non-finite value in {0}")]
    MissingValues(String),
    #[error("mediation analysis requires a mediator column `M`")]
    MediatorRequired,
    #[error("dataset must contain at least 2 rows (got {0})")]
    TooFewRows(usize),
    #[error("outcome is constant; min-max scaling is undefined")]
    DegenerateOutcome,
    #[error("csv input: {0}")]
    Csv(String),

    #[error("invalid learner specification: {0}")]
    InvalidSpec(String),
    #[error("feature expansion yields {cols} columns for {rows} rows")]
    TooManyColumns { cols: usize, rows: usize },
    #[error("design matrix is singular")]
    SingularDesign,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("column mismatch: model trained on {expected} columns, got {got}")]
    ColumnMismatch { expected: usize, got: usize },

    #[error("bad fold count: v = {v} for n = {n}")]
    BadFoldCount { n: usize, v: usize },
    #[error("empty level-one matrix")]
    EmptyMatrix,
    #[error("every learner in the library failed")]
    AllLearnersFailed,

    #[error("stratum has {got} rows, at least {min} required")]
    StratumTooSmall { got: usize, min: usize },
    #[error("no control (A = 0) rows available")]
    NoControls,
    #[error("invalid option: {0}")]
    InvalidOption(String),

    #[error("path model: {0}")]
    PathModel(String),
    #[error("path model is cyclic: {0}")]
    CyclicModel(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("missing edge {from} -> {to}")]
    MissingEdge { from: String, to: String },
    #[error("too few observations ({n}) for {params} free parameters")]
    TooFewObservations { n: usize, params: usize },
    #[error("bootstrap needs at least {min} replicates (got {got})")]
    TooFewReplicates { got: usize, min: usize },
    #[error("{failed} of {total} bootstrap refits failed")]
    TooManyFailures { failed: usize, total: usize },

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("no records to summarise")]
    NoRecords,
}

pub type Result<T> = std::result::Result<T, Error>;
