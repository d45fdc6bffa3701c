use thiserror::Error;

use crate::checker::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("cannot decode trajectory: {0}")]
    Decode(String),

    #[error("infeasible solution: {}", format_violations(.0))]
    Infeasible(Vec<Violation>),

    #[error("instance too large for exhaustive search: {0}")]
    SizeGuard(String),

    #[error("no feasible solution: {0}")]
    Unsolvable(String),

    #[error("numeric fault: {0}")]
    Numeric(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}
