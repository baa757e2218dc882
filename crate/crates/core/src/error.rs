use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty survey")]
    EmptySurvey,

    #[error("empty point set: {0}")]
    EmptyPoints(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("no inliers")]
    NoInliers,

    #[error("patch too small for quartiles ({0} scores, need at least 4)")]
    PatchTooSmall(usize),

    #[error("not enough points: need more than {needed}, got {got}")]
    NotEnoughPoints { needed: usize, got: usize },

    #[error("index {index} out of range for {len} points")]
    OutOfRange { index: usize, len: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("ray misses terrain extent at ping {ping}, beam {beam}")]
    RayMiss { ping: usize, beam: usize },

    #[error("patch {patch}")]
    InPatch {
        patch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
