use std::path::Path;

use thiserror::Error;

/// Process exit codes. Stable; documented in the README.
pub const EXIT_SCHEMA: u8 = 1;
pub const EXIT_PLACEMENT: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_USAGE: u8 = 64;

#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed or invalid input file.
    #[error("{0}")]
    Schema(String),
    /// The engine could not satisfy the request (no space, bad anchors,
    /// degenerate sightline, empty candidate pool).
    #[error("{0}")]
    Placement(String),
    #[error("{0}")]
    Io(String),
    /// Bad flags or config.
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn code(&self) -> u8 {
        match self {
            CliError::Schema(_) => EXIT_SCHEMA,
            CliError::Placement(_) => EXIT_PLACEMENT,
            CliError::Io(_) => EXIT_IO,
            CliError::Usage(_) => EXIT_USAGE,
        }
    }
}

impl From<stagelayout::placement::PlacementError> for CliError {
    fn from(e: stagelayout::placement::PlacementError) -> Self {
        use stagelayout::placement::PlacementError as P;
        match e {
            P::Schema(s) => CliError::Schema(s.to_string()),
            P::Config(g) => CliError::Usage(format!("stage config: {g}")),
            other => CliError::Placement(other.to_string()),
        }
    }
}
