use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("improper transfer function: numerator degree {num} exceeds denominator degree {den}")]
    Improper { num: usize, den: usize },

    #[error("invalid period {0} s (must be finite and positive)")]
    InvalidPeriod(f64),

    #[error("period mismatch: {0} s vs {1} s")]
    PeriodMismatch(f64, f64),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("frequency response is singular at omega = {omega} rad/s (evaluation point is a pole)")]
    Singular { omega: f64 },

    #[error("algebraic loop: {0}")]
    AlgebraicLoop(String),

    #[error("matrix logarithm undefined: {0}")]
    Logarithm(String),

    #[error("plant zero at {0} lies on or outside the unit circle; the cancellation variant would cancel it, use the ripple_free variant")]
    NonMinimumPhase(String),

    #[error("scheme N_u = {n_u}, N_y = {n_y} is not coprime; reduce it to the gcd period first")]
    NotCoprime { n_u: usize, n_y: usize },

    #[error("run diverged at t = {0} s")]
    Divergent(f64),

    #[error("scenario: {0}")]
    Scenario(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
