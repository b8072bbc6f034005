use std::fmt;
use std::io::ErrorKind;

/// Process exit codes. These values are part of the command-line contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Failure = 1,
    MissingInput = 2,
    MalformedData = 3,
    MissingPrerequisite = 4,
    IncompatibleCheckpoint = 5,
}

#[derive(Debug)]
pub struct CliError {
    pub exit: Exit,
    pub message: String,
}

impl CliError {
    pub fn new(exit: Exit, message: impl Into<String>) -> Self {
        CliError {
            exit,
            message: message.into(),
        }
    }

    pub fn missing_input(message: impl Into<String>) -> Self {
        CliError::new(Exit::MissingInput, message)
    }

    pub fn malformed(message: impl Into<String>) -> Self {
        CliError::new(Exit::MalformedData, message)
    }

    pub fn prerequisite(message: impl Into<String>) -> Self {
        CliError::new(Exit::MissingPrerequisite, message)
    }

    pub fn incompatible(message: impl Into<String>) -> Self {
        CliError::new(Exit::IncompatibleCheckpoint, message)
    }

    /// Prefixes the message with the file the error concerns.
    pub fn in_file(mut self, path: &std::path::Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<laha::Error> for CliError {
    fn from(e: laha::Error) -> Self {
        use laha::Error as E;
        let exit = match &e {
            E::Io { source, .. } if source.kind() == ErrorKind::NotFound => Exit::MissingInput,
            E::Parse { .. } | E::Validation(_) | E::Format(_) => Exit::MalformedData,
            E::IncompatibleCheckpoint(_) => Exit::IncompatibleCheckpoint,
            _ => Exit::Failure,
        };
        CliError::new(exit, e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
