use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("signals live on different time grids")]
    GridMismatch,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("system matrix A is not Hurwitz (max real part {max_real_part:e})")]
    NotHurwitz { max_real_part: f64 },

    #[error("iterate diverged at iteration {iteration} (norm {norm:e}); step size too large")]
    Divergence { iteration: usize, norm: f64 },

    #[error("Riccati solution blew up at t = {time}")]
    RiccatiBlowUp { time: f64 },

    #[error(
        "Hamiltonian has {count} eigenvalue(s) within {tol:e} of the imaginary axis; \
         (A, B) must be stabilizable and (A, sqrt(Qx)) detectable"
    )]
    ImaginaryAxisEigenvalue { count: usize, tol: f64 },

    #[error("singular matrix: {0}")]
    Singular(&'static str),

    #[error(
        "state data matrix is rank deficient (rank {rank} < {required}); \
         slightly perturb the initial state x0 and collect again"
    )]
    RankDeficient { rank: usize, required: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
