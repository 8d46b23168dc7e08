use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The optimizer ran out of iterations. `best` holds the best iterate in
    /// the natural parameterization of the model that was being fitted.
    #[error("fit did not converge within {iterations} iterations")]
    FitFailure { iterations: usize, best: Vec<f64> },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("ambiguous threshold: the two count modes are indistinguishable")]
    AmbiguousThreshold,

    #[error("singular model: {0}")]
    SingularModel(String),

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    /// `f_nvm + f_nv0 <= 1`: readout carries no charge information.
    #[error("degenerate readout: f_nvm + f_nv0 = {0} must exceed 1")]
    DegenerateReadout(f64),

    #[error("zero spin contrast for NV {0}: ms=0 and ms=1 references agree")]
    ZeroContrast(usize),

    #[error("correlation undefined: NV {0} has zero variance")]
    UndefinedCorrelation(usize),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

/// Fails with [`Error::InvalidArgument`] unless every value is finite.
pub(crate) fn ensure_finite(what: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(alloc::format!("{what} must be finite")))
    }
}

