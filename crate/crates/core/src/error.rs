use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid interval [{0}, {1}]: lower end must be below upper end")]
    InvalidInterval(f64, f64),
    #[error("duplicate node {0}")]
    DuplicateNode(f64),
    #[error("invalid weight {0}: weights must be positive and finite")]
    InvalidWeight(f64),
    #[error("shape mismatch: {0}")]
    ShapeError(String),
    #[error("degenerate basis: {0}")]
    DegenerateBasis(String),
    #[error("overlapping intervals at level {level}: ({a1}, {b1}] and ({a2}, {b2}]")]
    OverlapError {
        level: usize,
        a1: f64,
        b1: f64,
        a2: f64,
        b2: f64,
    },
    #[error("level order violated: need k > j, got k = {k}, j = {j}")]
    OrderError { k: usize, j: usize },
    #[error("pairing expressions disagree: difference {diff:e} exceeds {bound:e}")]
    CompositionInconsistency { diff: f64, bound: f64 },
    #[error("pairing matrix is singular or near-singular (condition estimate {0:e})")]
    SingularPairing(f64),
    #[error("invalid kernel state: {0}")]
    StateError(String),
    #[error("Fredholm determinant vanishes ({0:e}); resolvent undefined")]
    ResolventSingular(f64),
    #[error("node index {index} out of range at level {level} (size {size})")]
    IndexError {
        level: usize,
        index: usize,
        size: usize,
    },
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("count interpolation of degree {0} is ill-conditioned (max 8)")]
    ConditioningError(usize),
    #[error("instance does not define a probability measure: {0}")]
    NotAProbability(String),
    #[error("negative density {0:e} encountered while sampling")]
    SignedDensityError(f64),
    #[error("{0} labeled configurations exceed the enumeration cap")]
    TooManyConfigurations(u128),
    #[error("invalid chain spec: {0}")]
    InvalidSpec(String),
    #[error("invalid sampler config: {0}")]
    InvalidSamplerConfig(String),
}

impl Error {
    /// Variant name, as reported by the CLI.
    pub fn name(&self) -> &'static str {
        match self {
            Error::InvalidInterval(..) => "InvalidInterval",
            Error::DuplicateNode(_) => "DuplicateNode",
            Error::InvalidWeight(_) => "InvalidWeight",
            Error::ShapeError(_) => "ShapeError",
            Error::DegenerateBasis(_) => "DegenerateBasis",
            Error::OverlapError { .. } => "OverlapError",
            Error::OrderError { .. } => "OrderError",
            Error::CompositionInconsistency { .. } => "CompositionInconsistency",
            Error::SingularPairing(_) => "SingularPairing",
            Error::StateError(_) => "StateError",
            Error::ResolventSingular(_) => "ResolventSingular",
            Error::IndexError { .. } => "IndexError",
            Error::DomainError(_) => "DomainError",
            Error::ConditioningError(_) => "ConditioningError",
            Error::NotAProbability(_) => "NotAProbability",
            Error::SignedDensityError(_) => "SignedDensityError",
            Error::TooManyConfigurations(_) => "TooManyConfigurations",
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::InvalidSamplerConfig(_) => "InvalidSamplerConfig",
        }
    }

    /// True for errors caused by malformed input rather than by the numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInterval(..)
                | Error::DuplicateNode(_)
                | Error::InvalidWeight(_)
                | Error::ShapeError(_)
                | Error::OverlapError { .. }
                | Error::OrderError { .. }
                | Error::IndexError { .. }
                | Error::InvalidSpec(_)
                | Error::InvalidSamplerConfig(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
