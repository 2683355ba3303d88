use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric: asymmetry {0:.3e} exceeds tolerance")]
    NotSymmetric(f64),
    #[error("tensor dimensions do not match: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("modulus is singular or ill-conditioned (condition estimate {0:.3e})")]
    SingularModulus(f64),
    #[error("modulus is not symmetric positive definite (smallest eigenvalue {0:.3e})")]
    NonSpdModulus(f64),
    #[error("alpha(beta, d) is singular and the right-hand side has a null-space component")]
    SingularAlpha,
    #[error("phi does not change sign on [0, gamma*]; root not bracketed")]
    RootNotBracketed,
    #[error("alpha_{0} does not commute with T (commutator norm {1:.3e})")]
    NonCommuting(usize, f64),
    #[error("degenerate laminate: zero denominator in the beta* derivative")]
    DegenerateLaminate,
    #[error("iterative solver stalled: {0}")]
    SolverStall(String),
    #[error("elastic fixed point did not converge within {0} outer iterations")]
    NewtonDivergence(usize),
    #[error("time step failed: {0}")]
    StepFailure(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
