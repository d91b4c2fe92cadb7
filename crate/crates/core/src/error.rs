use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("herald probability is zero for this input")]
    DegenerateHerald,

    #[error("visibility {target:.4} is not achievable; maximum is {max_achievable:.4}")]
    Calibration { target: f64, max_achievable: f64 },

    #[error(
        "polarization compensation did not converge (best summed infidelity {best_infidelity:e})"
    )]
    Compensation { best_infidelity: f64 },

    #[error("channel {channel} stream is not sorted at index {index}")]
    UnsortedStream { channel: u8, index: usize },

    #[error("basis pair for S_{axis} has zero counts")]
    UndefinedAxis { axis: char },

    #[error("visibility undefined: zero counts far from the dip")]
    UndefinedVisibility,

    #[error("incomplete run: {0}")]
    IncompleteRun(String),

    #[error("tag file format error: {0}")]
    Format(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
