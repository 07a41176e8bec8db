use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },

    #[error("unknown identifier `{name}` at position {pos}")]
    UnknownIdentifier { pos: usize, name: String },

    #[error("variable `{var}` is not allowed in this coefficient (position {pos})")]
    VarNotAllowed { pos: usize, var: char },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("gamma transform requires a gamma term in the problem")]
    MissingGamma,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("CFL condition violated: {0}")]
    CflViolated(String),

    #[error("non-finite field value at time step {step}, node {node}")]
    NonFinite { step: usize, node: usize },

    #[error("singular tridiagonal system at row {0}")]
    SingularSystem(usize),

    #[error("non-finite state on path {path} at step {step}")]
    NonFiniteState { path: usize, step: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("solver did not converge after {0} outer iterations")]
    NotConverged(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
