use thiserror::Error;

use crate::graph::NodeId;

/// Errors raised by engine operations and builtins.
///
/// Every variant maps onto a stable machine-readable code (see [`Error::code`])
/// which the CLI and HTTP API surface verbatim.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidSpec(String),
    #[error("bad quantiles: {0}")]
    BadQuantiles(String),
    #[error("cdf unsupported: {0}")]
    Unsupported(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("horizon mismatch: {0}")]
    HorizonMismatch(String),
    #[error("non-positive cost in year {year}")]
    NonpositiveCost { year: i32 },
    #[error("benchmark scores are not strictly increasing in compute")]
    NonmonotoneInput,
    #[error("unreachable: {0}")]
    Unreachable(String),
    #[error("sublinear horizon scaling is not modeled")]
    UnsupportedSublinear,
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("bad weights: {0}")]
    BadWeights(String),
    #[error("zero exposure")]
    ZeroExposure,
    #[error("bad table: {0}")]
    BadTable(String),
    #[error("initial share must lie strictly between 0 and 1, got {0}")]
    BadShare(f64),
    #[error("prior must lie strictly between 0 and 1, got {0}")]
    DegeneratePrior(f64),
    #[error("unknown builtin `{0}`")]
    UnknownBuiltin(String),
    #[error("builtin `{builtin}` expects {expected} inputs, got {got}")]
    BadArity {
        builtin: String,
        expected: String,
        got: usize,
    },
    #[error("kind mismatch: {0}")]
    KindMismatch(String),
    #[error("node `{node}` failed in sample {sample}: {message}")]
    BuiltinFailure {
        node: NodeId,
        sample: u64,
        message: String,
    },
    #[error("node `{0}` not found")]
    NodeNotFound(String),
    #[error("target `{0}` is not Boolean")]
    TargetNotBool(String),
    #[error("graph contains a cycle through {0:?}")]
    Cycle(Vec<NodeId>),
    #[error("alias target `{0}` does not resolve")]
    AliasUnresolved(String),
    #[error("graph is invalid: {0}")]
    InvalidGraph(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidSpec(_) => "INVALID_SPEC",
            Error::BadQuantiles(_) => "BAD_QUANTILES",
            Error::Unsupported(_) => "UNSUPPORTED",
            Error::InvalidParams(_) => "INVALID_PARAMS",
            Error::HorizonMismatch(_) => "HORIZON_MISMATCH",
            Error::NonpositiveCost { .. } => "NONPOSITIVE_COST",
            Error::NonmonotoneInput => "NONMONOTONE_INPUT",
            Error::Unreachable(_) => "UNREACHABLE",
            Error::UnsupportedSublinear => "UNSUPPORTED_SUBLINEAR",
            Error::EmptyInput(_) => "EMPTY_INPUT",
            Error::BadWeights(_) => "BAD_WEIGHTS",
            Error::ZeroExposure => "ZERO_EXPOSURE",
            Error::BadTable(_) => "BAD_TABLE",
            Error::BadShare(_) => "BAD_SHARE",
            Error::DegeneratePrior(_) => "DEGENERATE_PRIOR",
            Error::UnknownBuiltin(_) => "UNKNOWN_BUILTIN",
            Error::BadArity { .. } => "BAD_ARITY",
            Error::KindMismatch(_) => "KIND_MISMATCH",
            Error::BuiltinFailure { .. } => "BUILTIN_FAILURE",
            Error::NodeNotFound(_) => "NODE_NOT_FOUND",
            Error::TargetNotBool(_) => "TARGET_NOT_BOOL",
            Error::Cycle(_) => "CYCLE",
            Error::AliasUnresolved(_) => "ALIAS_UNRESOLVED",
            Error::InvalidGraph(_) => "INVALID_GRAPH",
            Error::UnknownPreset(_) => "UNKNOWN_PRESET",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
