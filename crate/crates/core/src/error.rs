use thiserror::Error;

use crate::geometry::ManifoldPoint;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid point: {0}")]
    InvalidPoint(String),

    #[error("points at geodesic distance {distance} lie outside the injectivity domain")]
    OutsideInjectivityDomain { distance: f64 },

    #[error("invalid manifold specification: {0}")]
    InvalidManifold(String),

    #[error("bandwidth {h} is not admissible (must satisfy 0 < h < {limit})")]
    InvalidBandwidth { h: f64, limit: f64 },

    #[error("invalid bandwidth grid: {0}")]
    InvalidGrid(String),

    #[error("no sample point within the bandwidth of query {query:?}")]
    EmptyNeighborhood { query: ManifoldPoint },

    #[error("smoother undefined at observation {index}: empty neighborhood")]
    FitUndefined { index: usize },

    #[error("centered design is rank deficient (condition ratio {ratio:e})")]
    CollinearDesign { ratio: f64 },

    #[error("estimated covariance matrix is singular")]
    SingularCovariance,

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("no feasible bandwidth among {candidates} candidates")]
    NoFeasibleBandwidth { candidates: usize },

    #[error("{failed} of {reps} replications failed (limit 5%)")]
    UnstableDesign { failed: usize, reps: usize },

    #[error("invalid simulation design: {0}")]
    InvalidDesign(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("csv error at record {record}: {message}")]
    Csv { record: usize, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures that only mean "this bandwidth cannot be used here".
    pub fn is_infeasible_bandwidth(&self) -> bool {
        matches!(
            self,
            Error::EmptyNeighborhood { .. }
                | Error::FitUndefined { .. }
                | Error::CollinearDesign { .. }
        )
    }

    /// Short machine-readable tag, used in structured CLI errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidPoint(_) => "invalid_point",
            Error::OutsideInjectivityDomain { .. } => "outside_injectivity_domain",
            Error::InvalidManifold(_) => "invalid_manifold",
            Error::InvalidBandwidth { .. } => "invalid_bandwidth",
            Error::InvalidGrid(_) => "invalid_grid",
            Error::EmptyNeighborhood { .. } => "empty_neighborhood",
            Error::FitUndefined { .. } => "fit_undefined",
            Error::CollinearDesign { .. } => "collinear_design",
            Error::SingularCovariance => "singular_covariance",
            Error::InvalidDataset(_) => "invalid_dataset",
            Error::NoFeasibleBandwidth { .. } => "no_feasible_bandwidth",
            Error::UnstableDesign { .. } => "unstable_design",
            Error::InvalidDesign(_) => "invalid_design",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::Csv { .. } => "csv",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
