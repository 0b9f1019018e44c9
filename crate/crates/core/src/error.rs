use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("channel matrix is rank deficient (smallest/largest singular value {ratio:.3e})")]
    RankDeficient { ratio: f64 },
    #[error("point outside the barrier domain: {0}")]
    Domain(String),
    #[error("singular KKT matrix")]
    SingularKkt,
    #[error("singular SINR-matching system (user {user})")]
    SingularSinr { user: usize },
    #[error("noise covariance is not positive definite")]
    SingularNoise,
    #[error("{solver}: maximum iterations ({iterations}) exceeded")]
    MaxIterations { solver: &'static str, iterations: usize },
    #[error("{solver}: iterates diverged")]
    Diverged { solver: &'static str },
    #[error("{solver}: line search stalled")]
    LineSearchStall { solver: &'static str },
    #[error("cone program is unbounded")]
    SocpUnbounded,
    #[error("cone program failed: {0}")]
    SocpFailed(String),
    #[error("all steering vectors have zero channel gain")]
    DegenerateSteering,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True for errors caused by bad input rather than solver behaviour.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch(_)
                | Error::InvalidInstance(_)
                | Error::RankDeficient { .. }
                | Error::InvalidConfig(_)
                | Error::Parse(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
