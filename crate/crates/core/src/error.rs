use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument or configuration value violates its documented domain.
    #[error("invalid {what}: {reason}")]
    Domain { what: String, reason: String },

    #[error("singular impedance: {0}")]
    SingularImpedance(String),

    #[error("invalid spectrum: {0}")]
    Spectrum(String),

    #[error("window of {samples} samples spans {periods:.6} periods of {f_hz} Hz, not an integer")]
    NonIntegerWindow {
        samples: usize,
        periods: f64,
        f_hz: f64,
    },

    #[error("simulation diverged at t = {t:.6} s: state `{state}` = {value:e}")]
    Diverged { t: f64, state: String, value: f64 },

    #[error("equilibrium not found: residual of `{state}` is {residual:e}")]
    Equilibrium { state: String, residual: f64 },

    #[error("implicit step did not converge at t = {t:.6} s (update norm {update:e})")]
    StepNotConverged { t: f64, update: f64 },

    #[error("sweep failed: {flagged} of {total} points flagged")]
    SweepFailed { flagged: usize, total: usize },

    #[error("study setup: {0}")]
    Setup(String),

    #[error("trace `{file}`: {reason}")]
    TraceImport { file: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn domain(what: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Domain {
            what: what.into(),
            reason: reason.into(),
        }
    }

    /// True for failures of the numerics (divergence, non-convergence)
    /// rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Diverged { .. }
                | Error::Equilibrium { .. }
                | Error::StepNotConverged { .. }
                | Error::SweepFailed { .. }
                | Error::SingularImpedance(_)
        )
    }
}
