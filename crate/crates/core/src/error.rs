use thiserror::Error;

use crate::hull::HullError;

/// Errors surfaced by the controller, the scenario runner and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("infeasible linearization point: {0}")]
    NonFinite(String),

    #[error("controller fault at step {step}: {reason}")]
    ControllerFault { step: usize, reason: String },

    #[error(transparent)]
    Hull(#[from] HullError),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}
