use thiserror::Error;

/// Every failure names the operation that raised it as `module::operation`.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{op}: domain error: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("{op}: numeric error: {detail}")]
    Numeric { op: &'static str, detail: String },

    #[error(
        "{op}: quadrature did not converge (estimate {estimate:e}, bracket [{lower:e}, {upper:e}])"
    )]
    Quadrature {
        op: &'static str,
        estimate: f64,
        lower: f64,
        upper: f64,
    },

    #[error("{op}: capability error: {detail}")]
    Capability { op: &'static str, detail: String },

    #[error("{op}: invalid configuration: {detail}")]
    Config { op: &'static str, detail: String },

    #[error("{op}: i/o error: {detail}")]
    Io { op: &'static str, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            op,
            detail: detail.into(),
        }
    }

    pub fn numeric(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Numeric {
            op,
            detail: detail.into(),
        }
    }

    pub fn capability(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Capability {
            op,
            detail: detail.into(),
        }
    }

    pub fn config(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Config {
            op,
            detail: detail.into(),
        }
    }

    pub fn io(op: &'static str, err: impl std::fmt::Display) -> Self {
        Error::Io {
            op,
            detail: err.to_string(),
        }
    }

    /// Operation tag, e.g. `"wiener::sample_path"`.
    pub fn op(&self) -> &'static str {
        match self {
            Error::Domain { op, .. }
            | Error::Numeric { op, .. }
            | Error::Quadrature { op, .. }
            | Error::Capability { op, .. }
            | Error::Config { op, .. }
            | Error::Io { op, .. } => op,
        }
    }

    /// Process exit code used by the batch runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain { .. } | Error::Config { .. } | Error::Io { .. } => 2,
            Error::Numeric { .. } | Error::Quadrature { .. } => 3,
            Error::Capability { .. } => 4,
        }
    }
}
