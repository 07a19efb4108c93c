use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors produced by the solver library.
///
/// Every variant maps to a stable machine-readable code (see [`Error::code`]),
/// which the command line front-end prints as `error=<CODE>`.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot normalize a vector of norm {norm:e}")]
    ZeroVector { norm: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("column {index} is not unit norm (|norm - 1| = {deviation:e})")]
    NotUnitNorm { index: usize, deviation: f64 },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("agent {agent} overlaps lower-indexed agents {overlaps:?} but no single one of them contains the whole overlap")]
    MultipleParents { agent: usize, overlaps: Vec<usize> },

    #[error("the agent overlap graph is disconnected ({components} components)")]
    DisconnectedAgents { components: usize },

    #[error("index {index} is not covered by any agent")]
    OrphanIndex { index: usize },

    #[error(
        "entry ({row}, {col}) is assigned to agent {owner}, which does not contain both endpoints"
    )]
    OwnershipViolation {
        row: usize,
        col: usize,
        owner: usize,
    },

    #[error("index precedence constraints contain a cycle")]
    CyclicPrecedence,

    #[error("sigma must lie in the open interval (0, 1), got {0}")]
    BadSigma(f64),

    #[error("agent {agent} is not a child of agent {parent}")]
    NotAChild { agent: usize, parent: usize },

    #[error("agent {agent} has no parent")]
    NoParent { agent: usize },

    #[error("index {index} is not in the coupling set of agent {agent}")]
    NotCoupled { agent: usize, index: usize },

    #[error("index {index} is not an uncoupled (home) index of agent {agent}")]
    NotHome { agent: usize, index: usize },

    #[error("agent {agent} has not reported its message for index {index} this sweep")]
    MissingMessage { agent: usize, index: usize },

    #[error("agent {agent} read a value stamped {stamp} at tick {tick}, older than the staleness bound {bound}")]
    StaleBeyondB {
        agent: usize,
        stamp: usize,
        tick: usize,
        bound: usize,
    },

    #[error("tick {tick} is beyond the schedule horizon {horizon}")]
    BeyondHorizon { tick: usize, horizon: usize },

    #[error("brute force enumeration supports n <= {max}, got n = {n}")]
    TooLarge { n: usize, max: usize },

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("corrupt image header: {0}")]
    CorruptHeader(String),

    #[error("truncated pixel data: expected {expected} samples, found {found}")]
    TruncatedPixelData { expected: usize, found: usize },

    #[error("cannot split {height} pixel rows among {agents} agents")]
    TooManyAgents { agents: usize, height: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("problem file {context}: {message}")]
    ProblemFile { context: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable upper-case identifier for the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            Error::ZeroVector { .. } => "ZERO_VECTOR",
            Error::DimensionMismatch(_) => "DIMENSION_MISMATCH",
            Error::NotUnitNorm { .. } => "NOT_UNIT_NORM",
            Error::InvalidMatrix(_) => "INVALID_MATRIX",
            Error::MultipleParents { .. } => "MULTIPLE_PARENTS",
            Error::DisconnectedAgents { .. } => "DISCONNECTED_AGENTS",
            Error::OrphanIndex { .. } => "ORPHAN_INDEX",
            Error::OwnershipViolation { .. } => "OWNERSHIP_VIOLATION",
            Error::CyclicPrecedence => "CYCLIC_PRECEDENCE",
            Error::BadSigma(_) => "BAD_SIGMA",
            Error::NotAChild { .. } => "NOT_A_CHILD",
            Error::NoParent { .. } => "NO_PARENT",
            Error::NotCoupled { .. } => "NOT_COUPLED",
            Error::NotHome { .. } => "NOT_HOME",
            Error::MissingMessage { .. } => "MISSING_MESSAGE",
            Error::StaleBeyondB { .. } => "STALE_BEYOND_B",
            Error::BeyondHorizon { .. } => "BEYOND_HORIZON",
            Error::TooLarge { .. } => "TOO_LARGE",
            Error::UnsupportedFormat(_) => "UNSUPPORTED_FORMAT",
            Error::CorruptHeader(_) => "CORRUPT_HEADER",
            Error::TruncatedPixelData { .. } => "TRUNCATED_PIXEL_DATA",
            Error::TooManyAgents { .. } => "TOO_MANY_AGENTS",
            Error::InvalidParameter(_) => "INVALID_PARAMETER",
            Error::ProblemFile { .. } => "PROBLEM_FILE",
            Error::Io(_) => "IO",
            Error::Csv(_) => "CSV",
        }
    }

    /// True for errors caused by malformed inputs rather than solver failures.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::ZeroVector { .. }
                | Error::MissingMessage { .. }
                | Error::StaleBeyondB { .. }
                | Error::Io(_)
                | Error::Csv(_)
        )
    }
}
