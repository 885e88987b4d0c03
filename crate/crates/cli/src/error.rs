use std::fmt;

/// A failure as recorded in `error.json`.
#[derive(Debug)]
pub struct CliError {
    pub kind: String,
    pub message: String,
}

impl CliError {
    pub fn new(kind: &str, message: impl Into<String>) -> Self {
        Self {
            kind: kind.to_string(),
            message: message.into(),
        }
    }
}

/// Prefixes the message of a failed read with the offending path.
pub fn at<T, E: Into<CliError>>(result: Result<T, E>, path: &std::path::Path) -> Result<T, CliError> {
    result.map_err(|e| {
        let e = e.into();
        CliError::new(&e.kind, format!("{}: {}", path.display(), e.message))
    })
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<fairtest_core::Error> for CliError {
    fn from(e: fairtest_core::Error) -> Self {
        Self::new(e.kind(), e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new("io", e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::new("serialization", e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::new("io", e.to_string())
    }
}
