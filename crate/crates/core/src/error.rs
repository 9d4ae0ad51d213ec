use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its admissible domain.
    #[error("parameter domain: {0}")]
    ParamDomain(String),

    /// No threshold can satisfy the requested control level (e.g. BFDR
    /// control at p = 0, where BFDR is identically 1).
    #[error("no threshold exists: {0}")]
    NoThreshold(String),

    /// Vector lengths that must agree do not.
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    /// An MCMC chain reached a non-finite log posterior.
    #[error("divergent chain: {0}")]
    DivergentChain(String),

    /// A summary was requested from data that cannot support it.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// Fixture verification was asked to compare results produced under a
    /// different configuration.
    #[error("config hash mismatch: results {results}, fixtures {fixtures}")]
    ConfigHashMismatch { results: String, fixtures: String },

    /// Invalid experiment configuration.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
