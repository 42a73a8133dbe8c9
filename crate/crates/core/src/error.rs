use thiserror::Error;

/// Errors raised across the crate. The variants map one-to-one onto the CLI
/// exit codes: statistical failures are reported through `TestReport`, not here.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    /// The window used to truncate an infinite field cannot contain every
    /// ancestor able to reach the observation region.
    #[error("window too small: radius {actual:.3} given, at least {required:.3} required")]
    WindowTooSmall { actual: f64, required: f64 },

    /// No exact or quadrature oracle exists for this motion / horizon pair.
    #[error("no oracle: {0}")]
    NoOracle(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// A generation exceeded the population cap.
    #[error("population blow-up: generation {generation} reached {population} particles (cap {cap})")]
    BlowUp {
        generation: usize,
        population: usize,
        cap: usize,
    },

    /// Rejection sampling gave up.
    #[error("resource exhausted after {attempts} attempts (empirical acceptance rate {rate:.3e})")]
    Exhausted { attempts: u64, rate: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn is_resource(&self) -> bool {
        matches!(self, Error::BlowUp { .. } | Error::Exhausted { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
