use thiserror::Error;

/// Errors raised by the numerical modules.
///
/// Every variant carries a stable short code (see [`Error::code`]) that the
/// command-line front end prints next to the message.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("integral diverges: {0}")]
    Divergent(String),

    #[error("kernel evaluated inside the singular band: |tau - 1| = {gap:e} < {floor:e}")]
    Singular { gap: f64, floor: f64 },

    #[error("{what} did not converge: {detail}")]
    NonConvergence { what: &'static str, detail: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("fiber equation has no positive root (X = {x_tilde}, lambda * |v|_2^2 = {linear})")]
    NoPositiveRoot { x_tilde: f64, linear: f64 },

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParameter { field, .. } => match *field {
                "n" => "E_DIM",
                "s" => "E_ORDER",
                "p0" => "E_P0",
                "eta" => "E_ETA",
                "R" => "E_RADIUS",
                "q" => "E_EXPONENT",
                _ => "E_PARAM",
            },
            Error::Divergent(_) => "E_DIVERGENT",
            Error::Singular { .. } => "E_SINGULAR",
            Error::NonConvergence { .. } => "E_NONCONVERGENCE",
            Error::Degenerate(_) => "E_DEGENERATE",
            Error::Factorization(_) => "E_FACTORIZATION",
            Error::NoPositiveRoot { .. } => "E_NO_ROOT",
            Error::Config(_) => "E_CONFIG",
        }
    }

    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
