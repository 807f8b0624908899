use thiserror::Error;

/// Errors raised by the estimation pipeline.
///
/// Numeric payloads are carried as `f64` regardless of the scalar type in use.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlmError {
    #[error("invalid point: {0}")]
    InvalidPoint(String),

    #[error("point outside injectivity radius: distance {distance} >= {radius}")]
    OutsideInjectivityRadius { distance: f64, radius: f64 },

    #[error("invalid bandwidth {h}: must lie in (0, {max})")]
    InvalidBandwidth { h: f64, max: f64 },

    #[error("empty kernel window: nearest sample point at distance {nearest} (bandwidth {h})")]
    EmptyWindow { nearest: f64, h: f64 },

    #[error("empty kernel windows at indices {indices:?}; bandwidth must exceed {min_feasible_h}")]
    EmptyWindows { indices: Vec<usize>, min_feasible_h: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate scale: {0}")]
    DegenerateScale(String),

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("singular matrix A (condition number {condition:e})")]
    SingularA { condition: f64 },

    #[error("no convergence after {iterations} iterations (last iterate {last}, residual {residual:e})")]
    Convergence { iterations: usize, last: f64, residual: f64 },

    #[error("smoothing failed at query point {index}: {source}")]
    AtQuery {
        index: usize,
        #[source]
        source: Box<PlmError>,
    },

    #[error("no feasible bandwidth in grid: {0}")]
    InfeasibleGrid(String),

    #[error("degenerate test: {0}")]
    DegenerateTest(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("campaign failed: {failed} of {total} replications failed")]
    Campaign { failed: usize, total: usize },
}

pub type Result<T, E = PlmError> = std::result::Result<T, E>;

impl PlmError {
    /// Wrap an error with the index of the query point that triggered it.
    pub fn at_query(self, index: usize) -> Self {
        PlmError::AtQuery { index, source: Box::new(self) }
    }

    /// Strip `AtQuery` wrappers.
    pub fn root(&self) -> &PlmError {
        match self {
            PlmError::AtQuery { source, .. } => source.root(),
            other => other,
        }
    }

    /// Whether the error comes from user input rather than from the numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self.root(),
            PlmError::InvalidPoint(_)
                | PlmError::InvalidBandwidth { .. }
                | PlmError::Dimension(_)
                | PlmError::Config(_)
        )
    }
}
