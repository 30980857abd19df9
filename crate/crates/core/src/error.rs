use std::path::PathBuf;

/// Errors produced by every module of the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("format error at byte {offset}: {msg}")]
    Format { offset: usize, msg: String },

    #[error("degenerate scene: {0}")]
    DegenerateScene(String),

    #[error("point is behind the camera (depth {0})")]
    BehindCamera(f64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty support: {0}")]
    EmptySupport(String),

    #[error("rank-deficient input: {0}")]
    RankDeficient(String),

    #[error("grid frames differ: {0}")]
    FrameMismatch(String),

    #[error("cannot normalize zero-norm feature at sample {0}")]
    ZeroNorm(usize),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("oracle failure on view {view}: {msg}")]
    Oracle { view: usize, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(offset: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            msg: msg.into(),
        }
    }
}
