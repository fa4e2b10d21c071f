use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input: bad shapes, out-of-range configuration values, bad probability vectors.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    /// A parameter lies outside the domain where a formula is defined.
    #[error("domain error in {what}: {detail}")]
    Domain { what: &'static str, detail: String },

    /// An eigenvalue sits at or beyond the pole of a log-determinant statistic, which
    /// only happens when the spectrum has a supercritical outlier.
    #[error(
        "supercritical spectrum: eigenvalue {eigenvalue:.9} reaches the statistic's pole at {pole:.9}"
    )]
    Supercritical { eigenvalue: f64, pole: f64 },

    #[error("quadrature did not converge: achieved error {achieved:.3e}, requested {requested:.3e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("internal consistency check failed for {what}: closed form {closed:.12}, quadrature {quadrature:.12}")]
    Consistency {
        what: &'static str,
        closed: f64,
        quadrature: f64,
    },

    #[error("linear algebra failure: {0}")]
    LinAlg(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            what,
            detail: detail.into(),
        }
    }

    /// True for failures of the numerics (domain, supercritical, quadrature, consistency)
    /// as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Domain { .. }
                | Error::Supercritical { .. }
                | Error::Quadrature { .. }
                | Error::Consistency { .. }
                | Error::LinAlg(_)
        )
    }
}
