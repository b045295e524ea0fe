use thiserror::Error;

/// Errors raised by the steering toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Photon subtraction requested from a mode with zero mean photon number.
    #[error("no photon to subtract from mode {mode} (mean photon number is zero)")]
    NoPhoton { mode: usize },

    /// The constraint directions have zero marginal variance.
    #[error("singular conditioning: {0}")]
    SingularConditioning(String),

    /// A bin of Alice's partition carries no probability.
    #[error("degenerate bin [{lo}, {hi}): probability {prob:e}")]
    DegenerateBin { lo: f64, hi: f64, prob: f64 },

    /// Invalid bin partition.
    #[error("invalid partition: {0}")]
    Partition(String),

    /// The optimized two-mode driver only handles one mode per party.
    #[error("state has {alice} Alice mode(s) and {bob} Bob mode(s); use fixed-basis evaluation")]
    Multimode { alice: usize, bob: usize },

    /// The rejection sampler could not bound the target density.
    #[error("rejection envelope failure: {0}")]
    Envelope(String),

    /// Least-squares fit of the Hellinger curve failed.
    #[error("fit error: {0}")]
    Fit(String),

    /// Malformed dataset file.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
