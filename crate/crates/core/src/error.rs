use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("wrong stencil kind: expected {expected}")]
    WrongStencilKind { expected: &'static str },
    #[error("time span must be finite and nonnegative, got {0}")]
    NegativeSpan(f64),
    #[error("timestep must be finite and positive, got {0}")]
    InvalidTimestep(f64),
    #[error("time {time} is not on the step lattice of dt = {dt}")]
    OffLattice { time: f64, dt: f64 },
    #[error("cannot place {particles} particles on {nodes} nodes with positive density")]
    Placement { particles: usize, nodes: usize },
    #[error("moment specifications do not match: {0}")]
    SpecMismatch(String),
    #[error("non-finite value detected: {0}")]
    NonFinite(String),
    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
