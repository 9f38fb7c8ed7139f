//! Crate-wide error type.

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("tensor `{tensor}`: element {index} is not finite")]
    NonFinite { tensor: String, index: usize },

    #[error("tensor `{tensor}`: degenerate quantization range (q_max = 0)")]
    DegenerateRange { tensor: String },

    #[error("tensor `{0}` carries no quantization parameters")]
    MissingQuantParams(String),

    #[error("no calibration statistics for tensor `{0}`")]
    MissingStats(String),

    #[error("{context}: expected {expected} elements, got {actual}")]
    DimMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("invalid quantization parameters: {0}")]
    InvalidQuantParams(String),

    #[error("gain {value} at bin {index} lies outside [0, 1]")]
    GainOutOfRange { index: usize, value: f32 },

    #[error("unsupported wav input: {0}")]
    WavFormat(String),

    #[error("model container: {0}")]
    Container(String),

    #[error("graph `{graph}`: {reason}")]
    InvalidGraph { graph: String, reason: String },

    #[error("activation buffer ({needed} B) exceeds the L2 capacity ({capacity} B)")]
    ActivationOverflow { needed: u64, capacity: u64 },

    #[error("layer `{layer}`: one output row ({bytes} B doubled) does not fit L1 ({capacity} B)")]
    TileOverflow {
        layer: String,
        bytes: u64,
        capacity: u64,
    },

    #[error("model parameters ({bytes} B) do not fit {store} ({capacity} B)")]
    Infeasible {
        store: String,
        bytes: u64,
        capacity: u64,
    },

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
