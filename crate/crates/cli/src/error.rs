use std::fmt;

use dnb_core::content_store::StoreError;
use dnb_core::identity::IdentityError;
use dnb_core::simnet::SimError;
use dnb_core::{ContractError, LedgerError, ParseError};

/// A failed command: exit code 1 for domain errors, 2 for usage errors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub kind: String,
    pub detail: String,
    pub code: i32,
}

impl CliError {
    pub fn domain(kind: &str, detail: impl fmt::Display) -> Self {
        CliError {
            kind: kind.to_string(),
            detail: detail.to_string(),
            code: 1,
        }
    }

    pub fn usage(detail: impl fmt::Display) -> Self {
        CliError {
            kind: "Usage".into(),
            detail: detail.to_string(),
            code: 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error: {}: {}", self.kind, self.detail)
    }
}

impl std::error::Error for CliError {}

impl From<LedgerError> for CliError {
    fn from(e: LedgerError) -> Self {
        CliError::domain(e.kind(), e.root())
    }
}

impl From<ContractError> for CliError {
    fn from(e: ContractError) -> Self {
        CliError::domain(e.kind(), &e)
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        CliError::domain(e.kind(), &e)
    }
}

impl From<IdentityError> for CliError {
    fn from(e: IdentityError) -> Self {
        CliError::domain(e.kind(), &e)
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Ledger(inner) => inner.into(),
            other => CliError::domain(other.kind(), &other),
        }
    }
}

impl From<ParseError> for CliError {
    fn from(e: ParseError) -> Self {
        CliError::domain("ParseError", &e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::domain("Io", &e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::domain("Json", &e)
    }
}
