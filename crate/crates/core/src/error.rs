use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("raster dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("pixel ({x}, {y}) outside {width}x{height} raster")]
    PixelOutOfRange {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("oracle failure during {stage}: {message}")]
    Oracle { stage: String, message: String },

    #[error("pipeline stage `{stage}` failed{}: {source}", pair.map(|p| format!(" (index {p})")).unwrap_or_default())]
    Stage {
        stage: &'static str,
        pair: Option<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn at_stage(self, stage: &'static str, pair: Option<usize>) -> Self {
        Error::Stage {
            stage,
            pair,
            source: Box::new(self),
        }
    }
}
