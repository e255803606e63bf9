use thiserror::Error;

/// Errors raised by weight construction, estimation, inference and the
/// error-covariance estimators.
#[derive(Debug, Error)]
pub enum SarError {
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("invalid coordinates at row {row}: {msg}")]
    InvalidCoordinates { row: usize, msg: String },
    #[error("zero distance between points {i} and {j} under an inverse-distance scheme")]
    DegenerateDistance { i: usize, j: usize },
    #[error("invalid distance scheme: {0}")]
    InvalidScheme(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("error covariance block {index} is not symmetric (max deviation {deviation:e})")]
    Asymmetric { index: usize, deviation: f64 },
    #[error("error covariance block {index} is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { index: usize, min_eigenvalue: f64 },
    #[error(
        "corrected Gram matrix X'X - sum(Omega) is not invertible (condition {condition:e}); \
         the measurement error may be too large relative to covariate variation"
    )]
    NoninvertibleCorrectedGram { condition: f64 },
    #[error(
        "profile variance is non-positive ({value:e}) at rho = {rho}; \
         shrink the error covariance or check the covariate design"
    )]
    NegativeProfileVariance { rho: f64, value: f64 },
    #[error("I - rho L is singular or has non-positive determinant at rho = {rho}")]
    SingularS { rho: f64 },
    #[error("{method} did not converge after {iterations} iterations: {trace}")]
    NoConvergence {
        method: &'static str,
        iterations: usize,
        trace: String,
    },
    #[error("Newton search for rho requires symmetric weights")]
    NewtonRequiresSymmetric,
    #[error("information matrix is singular (condition {condition:e})")]
    SingularInformation { condition: f64 },
    #[error("covariance of the estimated error covariance is invalid: {0}")]
    InvalidC(String),
    #[error("at least two replicates per observation are required, got {k}")]
    InsufficientReplicates { k: usize },
    #[error("at least two validation rows are required, got {m}")]
    InsufficientValidation { m: usize },
    #[error("embedding is rank deficient: eigenvalue {index} is {eigenvalue:e}")]
    RankDeficientEmbedding { index: usize, eigenvalue: f64 },
    #[error("degenerate embedding: second-moment matrix of latent positions is singular")]
    DegenerateEmbedding,
    #[error("invalid probability {value} at ({row}, {col})")]
    InvalidProbability { row: usize, col: usize, value: f64 },
    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),
    #[error("invalid config at {path}: {msg}")]
    InvalidConfig { path: String, msg: String },
    #[error("{path}: {msg}")]
    Parse { path: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SarError {
    /// Stable machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            SarError::InvalidWeights(_) => "invalid_weights",
            SarError::InvalidCoordinates { .. } => "invalid_coordinates",
            SarError::DegenerateDistance { .. } => "degenerate_distance",
            SarError::InvalidScheme(_) => "invalid_scheme",
            SarError::Dimension(_) => "dimension_mismatch",
            SarError::InvalidDesign(_) => "invalid_design",
            SarError::Asymmetric { .. } => "asymmetric_error_covariance",
            SarError::NotPsd { .. } => "not_psd",
            SarError::NoninvertibleCorrectedGram { .. } => "noninvertible_corrected_gram",
            SarError::NegativeProfileVariance { .. } => "negative_profile_variance",
            SarError::SingularS { .. } => "singular_s",
            SarError::NoConvergence { .. } => "no_convergence",
            SarError::NewtonRequiresSymmetric => "newton_requires_symmetric",
            SarError::SingularInformation { .. } => "singular_information",
            SarError::InvalidC(_) => "invalid_c",
            SarError::InsufficientReplicates { .. } => "insufficient_replicates",
            SarError::InsufficientValidation { .. } => "insufficient_validation",
            SarError::RankDeficientEmbedding { .. } => "rank_deficient_embedding",
            SarError::DegenerateEmbedding => "degenerate_embedding",
            SarError::InvalidProbability { .. } => "invalid_probability",
            SarError::InvalidCovariance(_) => "invalid_covariance",
            SarError::InvalidConfig { .. } => "invalid_config",
            SarError::Parse { .. } => "parse_error",
            SarError::Io(_) => "io_error",
        }
    }

    /// True for input problems (files, parsing, configuration) as opposed
    /// to numerical estimation failures.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            SarError::Parse { .. } | SarError::Io(_) | SarError::InvalidConfig { .. }
        )
    }
}

pub type Result<T, E = SarError> = std::result::Result<T, E>;
