use std::path::PathBuf;

/// Errors raised by the simulation and estimation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("quadrature did not converge (best estimate {estimate:e}, error estimate {error:e})")]
    Accuracy { estimate: f64, error: f64 },

    #[error("aliasing: boundary samples reach {ratio:e} of the peak magnitude")]
    Aliasing { ratio: f64 },

    #[error("numerical consistency: {0}")]
    Consistency(String),

    #[error("grid does not cover the anamorphosis image; uncovered corners: {corners:?}")]
    Extent { corners: Vec<(f64, f64)> },

    #[error("density is not normalized (total mass {mass})")]
    Unnormalized { mass: f64 },

    #[error("log-likelihood is not concave around the maximum (a = {a:e})")]
    NonConcave { a: f64 },

    #[error("finite-difference step unstable: I(δ) = {coarse:e}, I(δ/2) = {fine:e}")]
    StepSize { coarse: f64, fine: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
