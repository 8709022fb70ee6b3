use thiserror::Error;

/// Errors raised anywhere in the attack synthesis pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum StaError {
    /// Shapes or dimensions that do not fit together.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A value that violates a documented invariant; `path` names the offending field.
    #[error("invalid configuration at `{path}`: {message}")]
    Config { path: String, message: String },

    /// Malformed scenario document.
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    /// The state left the guard band (non-finite or larger than the divergence threshold).
    #[error("trajectory diverged at grid index {index} (t = {time})")]
    Divergence { index: usize, time: f64 },

    /// No feasible or stabilizing answer exists for the requested problem.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// An iterative solver ran out of iterations.
    #[error("no convergence after {iterations} iterations: {message}")]
    Convergence { iterations: usize, message: String },

    /// Every backtracking halving of a descent step still produced a destabilizing gain.
    #[error("descent step failed at iteration {iteration}: no stabilizing gain after {halvings} halvings")]
    StepFailure { iteration: usize, halvings: usize },

    /// A failure inside the iterative solver, tagged with the iteration it happened in.
    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<StaError>,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl StaError {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        StaError::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Strips iteration context and returns the underlying error.
    pub fn root(&self) -> &StaError {
        match self {
            StaError::AtIteration { source, .. } => source.root(),
            other => other,
        }
    }
}

impl From<std::io::Error> for StaError {
    fn from(err: std::io::Error) -> Self {
        StaError::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, StaError>;
