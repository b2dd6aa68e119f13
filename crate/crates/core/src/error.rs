use thiserror::Error;

/// Errors raised by the solver and the diagnostics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    Domain(String),

    /// A model or configuration parameter lies outside its admissible window.
    /// The message names the violated inequality.
    #[error("parameter out of range: {0}")]
    Parameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A cube too small to contain any cell center.
    #[error("cube of radius {radius} contains no cell centers along axis {axis}")]
    Unresolved { radius: f64, axis: usize },

    #[error("negative density {value:e} at cell {cell}")]
    NegativeDensity { cell: usize, value: f64 },

    #[error("non-finite value at cell {cell}")]
    NonFinite { cell: usize },

    #[error("positivity lost beyond roundoff: {value:e} at cell {cell}")]
    PositivityViolation { cell: usize, value: f64 },

    #[error("stable time step {dt:e} fell below the minimum {min_dt:e}")]
    StepTooSmall { dt: f64, min_dt: f64 },

    #[error("conjugate gradient stalled after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("no stored snapshot in the time window ({start}, {end}]")]
    EmptyWindow { start: f64, end: f64 },

    #[error("time window ({start}, {end}] is not covered by the series [{first}, {last}]")]
    WindowOutOfRange {
        start: f64,
        end: f64,
        first: f64,
        last: f64,
    },
}

impl Error {
    /// True for errors caused by missing or mis-timed snapshot data.
    pub fn is_data_coverage(&self) -> bool {
        matches!(self, Error::EmptyWindow { .. } | Error::WindowOutOfRange { .. })
    }

    /// True when a shrinking construction has run out of data: either the
    /// time window or the spatial resolution is exhausted.
    pub fn ends_sequence(&self) -> bool {
        self.is_data_coverage() || matches!(self, Error::Unresolved { .. })
    }

    /// True for failures of the time integration itself.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NegativeDensity { .. }
                | Error::NonFinite { .. }
                | Error::PositivityViolation { .. }
                | Error::StepTooSmall { .. }
                | Error::NoConvergence { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
