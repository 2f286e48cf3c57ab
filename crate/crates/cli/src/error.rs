use std::fmt;

use spa_core::Error;

/// Prefix of every machine-readable error line on stderr.
pub const ERROR_TOKEN: &str = "spa-error";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Bad configuration, inputs or model parameters.
    Config,
    /// A computation failed on valid inputs.
    Numerical,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { kind: Kind::Config, message: message.into() }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self { kind: Kind::Numerical, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            Kind::Config => 2,
            Kind::Numerical => 3,
        }
    }

    /// Prepend context such as the offending file.
    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            Kind::Config => "config",
            Kind::Numerical => "numerical",
        };
        write!(f, "{ERROR_TOKEN}: {kind}: {}", self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let kind = match e {
            Error::Numerical(_) | Error::NonFiniteDerivative { .. } | Error::NotPositiveDefinite { .. } => {
                Kind::Numerical
            }
            _ => Kind::Config,
        };
        Self { kind, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::config(e.to_string())
    }
}

pub trait Context<T> {
    fn context(self, what: impl fmt::Display) -> CliResult<T>;
}

impl<T, E: Into<CliError>> Context<T> for std::result::Result<T, E> {
    fn context(self, what: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| e.into().context(what))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_errors_map_to_exit_codes() {
        assert_eq!(CliError::from(Error::InvalidModel(vec!["x".into()])).exit_code(), 2);
        assert_eq!(CliError::from(Error::Numerical("x".into())).exit_code(), 3);
        assert_eq!(CliError::from(Error::NotPositiveDefinite { pivot: 0, value: -1.0 }).exit_code(), 3);
    }

    #[test]
    fn display_carries_token() {
        let e: CliResult<()> = Err(Error::Domain("bad".into())).context("fit.csv");
        let s = e.unwrap_err().to_string();
        assert!(s.starts_with("spa-error: config: fit.csv: "), "{s}");
    }
}
