use std::fmt;

/// Failure of a subcommand, carrying its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or invalid configuration (exit 2).
    Config(String),
    /// Solver or I/O failure during a run (exit 3).
    Run(String),
    /// A gradient or conservation check exceeded its threshold (exit 4).
    Check(String),
    /// An inversion diverged and `--strict` was given (exit 5).
    Diverged(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Run(_) => 3,
            CliError::Check(_) => 4,
            CliError::Diverged(_) => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Run(m) => write!(f, "run failed: {m}"),
            CliError::Check(m) => write!(f, "check failed: {m}"),
            CliError::Diverged(m) => write!(f, "inversion diverged: {m}"),
        }
    }
}

impl From<adjprec::Error> for CliError {
    fn from(e: adjprec::Error) -> Self {
        match e {
            adjprec::Error::InvalidParameter(_) | adjprec::Error::IncommensurateTime { .. } => CliError::Config(e.to_string()),
            other => CliError::Run(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
