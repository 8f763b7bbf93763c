use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("line {line}: syntax error at `{token}`: {msg}")]
    Syntax {
        line: usize,
        token: String,
        msg: String,
    },
    #[error("line {line}: unknown element kind `{kind}`")]
    UnknownElement { line: usize, kind: String },
    #[error("element `{element}`: unresolved model `{model}`")]
    UnresolvedModel { element: String, model: String },
    #[error("invalid circuit: {0}")]
    Invariant(String),
    #[error("singular system at {freq} Hz near node `{node}`")]
    Singular { freq: f64, node: String },
    #[error("{0}")]
    Unsupported(String),
    #[error("expected {expected} ports, circuit declares {found}")]
    PortCount { expected: usize, found: usize },
    #[error("no sub-threshold band contains the center frequency")]
    NoBand,
    #[error("tunable `{0}` does not name an element parameter")]
    UnknownTunable(String),
    #[error("solver did not converge: residual {residual:e} A after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
