//! Command-line front end for the `rectiforge-core` solvers: file formats,
//! optimization specs and worker-pool drivers.

pub mod cli;
pub mod format;
pub mod par;
pub mod spec;

pub use rectiforge_core;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Solver(#[from] rectiforge_core::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    NoConvergence(String),
}

impl CliError {
    /// 1 usage, 2 solver non-convergence, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        use rectiforge_core::Error as E;
        match self {
            CliError::Usage(_) => 1,
            CliError::Solver(E::NoConvergence { .. } | E::Singular { .. }) => 2,
            CliError::Solver(_) => 1,
            CliError::Io { .. } => 3,
            CliError::NoConvergence(_) => 2,
        }
    }
}
