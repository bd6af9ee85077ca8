//! Exit-code contract: 0 ok, 2 config or input, 3 solver did not converge,
//! 4 infeasible task, 5 artifact mismatch.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Input = 2,
    NonConvergence = 3,
    Infeasible = 4,
    Mismatch = 5,
    Internal = 1,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn new(kind: ExitKind, error: impl Into<anyhow::Error>) -> Self {
        Self { kind, error: error.into() }
    }

    pub fn input(msg: impl fmt::Display) -> Self {
        Self::new(ExitKind::Input, anyhow::anyhow!("{msg}"))
    }

    pub fn code(&self) -> i32 {
        self.kind as i32
    }

    pub fn context(self, msg: impl fmt::Display + Send + Sync + 'static) -> Self {
        Self { kind: self.kind, error: self.error.context(msg) }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl From<reachkit::Error> for CliError {
    fn from(e: reachkit::Error) -> Self {
        use reachkit::Error as E;
        let kind = match &e {
            E::Config(_) | E::Domain(_) | E::Format(_) | E::Io(_) | E::Json(_) | E::OutOfDomain { .. } => ExitKind::Input,
            E::Infeasible { .. } => ExitKind::Infeasible,
            E::Shape(_) | E::Index { .. } => ExitKind::Mismatch,
            E::Numeric(_) => ExitKind::Internal,
        };
        Self::new(kind, e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new(ExitKind::Internal, e)
    }
}
