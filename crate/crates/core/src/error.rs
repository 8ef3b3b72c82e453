use thiserror::Error;

/// Errors raised while building, loading or analysing a unit cell.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate lattice: area {0:e} must be strictly positive")]
    DegenerateLattice(f64),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("node {0} lies outside the fundamental domain")]
    NodeOutsideCell(usize),

    #[error("bar {bar} references missing node {node}")]
    MissingNode { bar: usize, node: usize },

    #[error("bar {0} is a self-loop (same endpoint, zero shift)")]
    SelfLoop(usize),

    #[error("bar {0} has non-positive stiffness")]
    NonPositiveStiffness(usize),

    #[error("bar {bar} is too short: length {length:e}")]
    ShortBar { bar: usize, length: f64 },

    #[error("duplicate bar: bar {bar} repeats bar {first}")]
    DuplicateBar { bar: usize, first: usize },

    #[error("isolated node {0}")]
    IsolatedNode(usize),

    #[error("tiled bar graph is disconnected")]
    Disconnected,

    #[error("cell disconnected by hole")]
    DisconnectedByHole,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("linear solver breakdown: {0}")]
    Solver(String),

    #[error("not in canonical form (max pairing residual {pairing_residual:e})")]
    NotCanonical { pairing_residual: f64 },

    #[error("malformed cell file: {0}")]
    Parse(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
