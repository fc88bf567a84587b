use std::fmt;

/// Process exit codes.
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: msg.into(),
        }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: msg.into(),
        }
    }

    /// Numerical failures keep their class; anything else is a config error.
    pub fn from_config(e: volcast::Error) -> Self {
        Self::classify(e, EXIT_CONFIG)
    }

    /// Numerical failures keep their class; anything else is a data error.
    pub fn from_data(e: volcast::Error) -> Self {
        Self::classify(e, EXIT_DATA)
    }

    fn classify(e: volcast::Error, fallback: i32) -> Self {
        let code = match &e {
            e if e.is_numerical() => EXIT_NUMERICAL,
            volcast::Error::Parse { .. } | volcast::Error::Io(_) => EXIT_DATA,
            _ => fallback,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }

    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;
