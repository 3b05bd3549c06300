use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A geometric precondition failed (e.g. a point outside the room).
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("empty grid: {0}")]
    EmptyGrid(String),
    /// Two groups of actual/virtual points collide, or groups overlap.
    #[error("ambiguous layout: {0}")]
    Ambiguity(String),
    /// Source and receiver coincide.
    #[error("singularity: {0}")]
    Singularity(String),
    #[error("contract violation: {0}")]
    Contract(String),
    /// The requested impulse response length does not cover every image.
    #[error("impulse response of {length} taps drops {} image(s); needs at least {required}", dropped.len())]
    Truncation {
        length: usize,
        required: usize,
        dropped: Vec<usize>,
    },
    #[error("normalization error: {0}")]
    Normalization(String),
    #[error("infeasible constraints: {0}")]
    Infeasible(String),
    #[error("estimation error: {0}")]
    Estimation(String),
    #[error("insufficient decay: {0}")]
    InsufficientDecay(String),
    #[error("divergence: {0}")]
    Divergence(String),
    #[error("degenerate block: {0}")]
    Degenerate(String),
    #[error("undefined: {0}")]
    Undefined(String),
    /// Scene or report file did not match its schema.
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Wav(#[from] hound::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than numerical trouble.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::Argument(_)
                | Error::EmptyGrid(_)
                | Error::Ambiguity(_)
                | Error::Contract(_)
                | Error::Truncation { .. }
                | Error::Schema { .. }
                | Error::Io(_)
                | Error::Json(_)
                | Error::Wav(_)
                | Error::Csv(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
