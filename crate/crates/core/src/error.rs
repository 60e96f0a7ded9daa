use thiserror::Error;

/// Violations of the [`SystemConfig`](crate::SystemConfig) invariants.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("at least one path is required")]
    NoPaths,
    #[error("K must be at least 1")]
    ZeroData,
    #[error("K = {k} exceeds the number of paths N = {n}")]
    CodeExceedsPaths { k: usize, n: usize },
    #[error("queue capacity must be at least 1")]
    ZeroCapacity,
    #[error("{field} has {found} entries, expected {expected}")]
    LengthMismatch {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("inter-arrival period must be positive and finite, got {0}")]
    NonPositivePeriod(f64),
    #[error("service rate of path {path} must be positive and finite, got {value}")]
    NonPositiveRate { path: usize, value: f64 },
    #[error("erasure probability of path {path} must lie in [0, 1), got {value}")]
    ErasureOutOfRange { path: usize, value: f64 },
}

impl ConfigError {
    /// Stable machine-readable identifier.
    pub fn kind(&self) -> &'static str {
        match self {
            ConfigError::NoPaths => "no_paths",
            ConfigError::ZeroData => "zero_data",
            ConfigError::CodeExceedsPaths { .. } => "k_exceeds_n",
            ConfigError::ZeroCapacity => "zero_capacity",
            ConfigError::LengthMismatch { .. } => "length_mismatch",
            ConfigError::NonPositivePeriod(_) => "non_positive_period",
            ConfigError::NonPositiveRate { .. } => "non_positive_rate",
            ConfigError::ErasureOutOfRange { .. } => "erasure_out_of_range",
        }
    }
}

/// Failures of the analytic engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("queue state {q} is outside 0..={max}")]
    StateOutOfRange { q: usize, max: usize },
    #[error("subset size {k} exceeds universe size {n}")]
    SubsetTooLarge { k: usize, n: usize },
    #[error("operation requires a finite queue capacity")]
    RequiresFiniteCapacity,
    #[error("operation requires queue capacity L = {expected}")]
    WrongCapacity { expected: &'static str },
    #[error("unstable queue on path {path}: μτ = {load_inverse} ≤ 1, no geometric state law exists")]
    Unstable { path: usize, load_inverse: f64 },
    #[error("steady state did not converge (residual {residual:e})")]
    NoConvergence { residual: f64 },
    #[error("product state space has {states} states, above the cap of {cap}")]
    StateSpaceTooLarge { states: u128, cap: u128 },
    #[error("no block is ever decoded (success probability is zero)")]
    NeverDecoded,
    #[error("instance too large: N·(ℓ_max+1) = {size} exceeds {cap}")]
    InstanceTooLarge { size: usize, cap: usize },
    #[error("exact PAoI requires N < 2K (in-order decoding), got K = {k}, N = {n}")]
    OutOfOrderPossible { k: usize, n: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl AnalysisError {
    pub fn kind(&self) -> &'static str {
        match self {
            AnalysisError::StateOutOfRange { .. } => "state_out_of_range",
            AnalysisError::SubsetTooLarge { .. } => "subset_too_large",
            AnalysisError::RequiresFiniteCapacity => "requires_finite_capacity",
            AnalysisError::WrongCapacity { .. } => "wrong_capacity",
            AnalysisError::Unstable { .. } => "unstable",
            AnalysisError::NoConvergence { .. } => "no_convergence",
            AnalysisError::StateSpaceTooLarge { .. } => "state_space_too_large",
            AnalysisError::NeverDecoded => "never_decoded",
            AnalysisError::InstanceTooLarge { .. } => "instance_too_large",
            AnalysisError::OutOfOrderPossible { .. } => "out_of_order_possible",
            AnalysisError::InvalidArgument(_) => "invalid_argument",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(e) => e.kind(),
            Error::Analysis(e) => e.kind(),
            Error::Scenario(_) => "invalid_scenario",
            Error::Io(_) => "io",
            Error::Json(_) => "invalid_json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
