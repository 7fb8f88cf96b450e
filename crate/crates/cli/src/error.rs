use thiserror::Error;

/// Exit code for malformed input.
pub const EXIT_INVALID: i32 = 1;
/// Exit code when a solver result cannot be trusted.
pub const EXIT_INCONCLUSIVE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Inconclusive(String),
}

impl CliError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        CliError::Invalid(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => EXIT_INVALID,
            CliError::Inconclusive(_) => EXIT_INCONCLUSIVE,
        }
    }
}

impl From<incompat::Error> for CliError {
    fn from(e: incompat::Error) -> Self {
        match e {
            incompat::Error::Inconclusive { .. } | incompat::Error::HierarchyViolation(_) => {
                CliError::Inconclusive(e.to_string())
            }
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Invalid(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;
    use incompat::conic::SolveStatus;

    #[test]
    fn exit_codes() {
        let inconclusive = incompat::Error::Inconclusive { status: SolveStatus::Inaccurate, context: "t".into() };
        assert_eq!(CliError::from(inconclusive).exit_code(), EXIT_INCONCLUSIVE);
        assert_eq!(CliError::from(incompat::Error::HierarchyViolation("x".into())).exit_code(), EXIT_INCONCLUSIVE);
        assert_eq!(CliError::from(incompat::Error::DimensionGuard { dim: 32, limit: 16 }).exit_code(), EXIT_INVALID);
        assert_eq!(CliError::invalid("bad").exit_code(), EXIT_INVALID);
    }
}
