use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid term: {0}")]
    InvalidTerm(String),

    #[error("line {line}: {message}: {text}")]
    NTriples { line: usize, message: String, text: String },

    #[error("query syntax error at offset {offset}: {message}")]
    QuerySyntax { offset: usize, message: String },

    #[error("unsupported feature: {0}")]
    Unsupported(String),

    #[error("unknown variable {0}")]
    UnknownVariable(String),

    #[error("unbound partition key {0}")]
    UnboundPartitionKey(String),

    #[error("partition key must not be empty")]
    EmptyPartitionKey,

    #[error("not a join variable: {0}")]
    NotAJoinVariable(String),

    #[error("join requires at least one shared variable")]
    EmptyJoinKey,

    #[error("target index {index} out of range for {len} inputs")]
    TargetOutOfRange { index: usize, len: usize },

    #[error("cartesian product required: {0}")]
    CartesianProduct(String),

    #[error("oracle aborted: intermediate result exceeds {limit} rows")]
    OracleLimit { limit: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid workload spec: {0}")]
    Workload(String),

    #[error("node {node}: {message}")]
    NodeTask { node: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
