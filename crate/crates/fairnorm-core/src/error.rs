use thiserror::Error;

/// Crate-wide error type. Variants are grouped by the layer that raises them
/// so a caller (e.g. the CLI) can map them onto coarse exit categories.
#[derive(Debug, Error)]
pub enum Error {
    // -- shape and argument errors --------------------------------------
    #[error("dimension mismatch: {context} (got {got}, expected {expected})")]
    DimMismatch {
        context: &'static str,
        got: String,
        expected: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    // -- graph construction ----------------------------------------------
    #[error("graph invariant violated: {0}")]
    GraphInvariant(String),

    #[error("duplicate edge ({u}, {v})")]
    DuplicateEdge { u: usize, v: usize },

    #[error("self-loop on node {0}")]
    SelfLoop(usize),

    #[error("edge endpoint {node} out of range for {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },

    // -- data loading and generation --------------------------------------
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("synthetic spec infeasible: {0}")]
    InfeasibleSpec(String),

    #[error("stratified split infeasible: {0}")]
    SplitInfeasible(String),

    // -- numerics ----------------------------------------------------------
    #[error("matrix dimensions {rows}x{cols} exceed dense cap {cap}")]
    DenseCapExceeded { rows: usize, cols: usize, cap: usize },

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal {off:.3e})")]
    NoConvergence { sweeps: usize, off: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    // -- metrics and verification -----------------------------------------
    #[error("metric undefined: {0}")]
    MetricUndefined(String),

    #[error("config invalid: {0}")]
    ConfigInvalid(String),

    #[error("trial degenerate after {attempts} resampling attempts: {reason}")]
    TrialDegenerate { attempts: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Coarse category used by the CLI to pick an exit code.
    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            DimMismatch { .. } | InvalidArgument(_) | ConfigInvalid(_) => ErrorCategory::Usage,
            GraphInvariant(_)
            | DuplicateEdge { .. }
            | SelfLoop(_)
            | NodeOutOfRange { .. }
            | Parse { .. }
            | Io { .. }
            | InfeasibleSpec(_)
            | SplitInfeasible(_) => ErrorCategory::Data,
            DenseCapExceeded { .. }
            | NoConvergence { .. }
            | NonFinite(_)
            | MetricUndefined(_)
            | TrialDegenerate { .. } => ErrorCategory::Invariant,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Bad arguments or configuration.
    Usage,
    /// Unreadable or inconsistent input data.
    Data,
    /// A numeric contract or verified invariant failed at runtime.
    Invariant,
}
