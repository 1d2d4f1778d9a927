use symlqr::Error;
use thiserror::Error as ThisError;

/// Failures of a command, each with its process exit code.
#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("divergence: {0}")]
    Divergence(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("rank deficiency: {0}")]
    RankDeficient(String),
    /// Numerical breakdown or a failed statistical check.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::Io(_) => 4,
            CliError::RankDeficient(_) => 5,
            CliError::Failed(_) => 1,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Divergence { .. } => {
                CliError::Divergence(format!("{e}; reduce solver.alpha or try alpha = \"auto-power\""))
            }
            Error::RankDeficient { .. } => CliError::RankDeficient(format!(
                "{e}; perturb problem.x0 or widen gain.t_bar so the sampled states span the state space"
            )),
            Error::ImaginaryAxisEigenvalue { .. } => CliError::Config(format!(
                "{e}; the problem is not stabilizable or its cost does not detect every unstable mode"
            )),
            Error::Dimension(_)
            | Error::GridMismatch
            | Error::NonFinite(_)
            | Error::InvalidArgument(_)
            | Error::NotHurwitz { .. } => CliError::Config(e.to_string()),
            Error::RiccatiBlowUp { .. } | Error::Singular(_) => CliError::Failed(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
