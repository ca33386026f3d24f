use std::path::PathBuf;

/// Errors raised anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("duplicate variable `{0}`")]
    DuplicateVariable(String),

    #[error("cycle detected among variables {0:?}")]
    Cycle(Vec<String>),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("unknown mechanism `{0}`")]
    UnknownMechanism(String),

    #[error("input has {got} values but the model declares {expected} input variables")]
    InputArity { expected: usize, got: usize },

    #[error("value {value} is outside the domain of `{variable}`")]
    OutOfDomain { variable: String, value: String },

    #[error("mechanism of `{variable}` read the null value from `{parent}`")]
    NullRead { variable: String, parent: String },

    #[error("mechanism of `{variable}` failed: {message}")]
    Mechanism { variable: String, message: String },

    #[error("input spaces do not match: {0}")]
    MismatchedInputs(String),

    #[error("unknown model id `{id}` for task {task}")]
    UnknownModel { task: String, id: String },

    #[error("model `{0}` has no intermediate variable to align")]
    NoIntermediate(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("member models disagree on the output of input #{node}")]
    OutputDisagreement { node: usize },

    #[error("empty range for input `{0}`")]
    EmptyRange(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Format(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
