use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid field `{field}`: {message}")]
    Invalid { field: String, message: String },

    #[error("{0}")]
    Spectral(String),

    #[error("not solvable: violates (F, h0*) = 0 (residual {residual:e})")]
    NotSolvable { residual: f64 },

    #[error("characteristic speed undefined: (D h0, h0*) = {value:e}")]
    DegenerateDrift { value: f64 },

    #[error("profile blow-up at t={t}")]
    ProfileBlowUp { t: f64 },

    #[error("grid underflow: need {axis} in [{need_lo}, {need_hi}], stored [{have_lo}, {have_hi}]")]
    GridUnderflow {
        axis: &'static str,
        need_lo: f64,
        need_hi: f64,
        have_lo: f64,
        have_hi: f64,
    },

    #[error("boundary matching failed: {0}")]
    Matching(String),

    #[error("solver blow-up at t={t}")]
    SolverBlowUp { t: f64 },

    #[error("refinement inconclusive: {0}")]
    Inconclusive(String),

    #[error("no admissible horizon: {0}")]
    NoHorizon(String),

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
