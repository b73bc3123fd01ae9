use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain too coarse: {0}")]
    DomainTooCoarse(String),

    #[error("geodesic exceeded the non-trapping time cap ({0})")]
    NonTrapping(String),

    #[error("convexity constant unbounded under glancing refinement: {0}")]
    Unbounded(String),

    #[error("angular sampling too coarse for the requested degree: {0}")]
    AliasError(String),

    #[error("admissibility violated: {0}")]
    AdmissibilityViolation(String),

    #[error("subcriticality violated: {0}")]
    SubcriticalityViolation(String),

    #[error("spectral tail above tolerance at the mode cap: {0}")]
    DegreeOverflow(String),

    #[error("source iteration failed to contract: {0}")]
    NonConvergence(String),

    #[error("linear solver did not reach tolerance: {0}")]
    SolverStall(String),

    #[error("normal system condition estimate above cap: {0}")]
    IllConditioned(String),

    #[error("inconsistent input for a consistent-by-construction system: {0}")]
    ConsistencyFailure(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
