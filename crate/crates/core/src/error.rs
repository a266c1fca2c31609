use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("incomplete backward: no gradient for parameter `{0}`")]
    IncompleteBackward(String),

    #[error("loss function is not deterministic: {0}")]
    Determinism(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("embedding is not unit norm: {0}")]
    Normalization(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("label error: {0}")]
    Label(String),

    #[error("format error in {context}: {detail}")]
    Format { context: String, detail: String },

    #[error("incompatible checkpoint: {0}")]
    Compatibility(String),

    #[error("training diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    /// Short stable identifier, used for machine-parsable CLI output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::DegenerateInput(_) => "degenerate_input",
            Error::IncompleteBackward(_) => "incomplete_backward",
            Error::Determinism(_) => "determinism",
            Error::Argument(_) => "argument",
            Error::Normalization(_) => "normalization",
            Error::Range(_) => "range",
            Error::Index(_) => "index",
            Error::Label(_) => "label",
            Error::Format { .. } => "format",
            Error::Compatibility(_) => "compatibility",
            Error::Divergence { .. } => "divergence",
            Error::Io { .. } => "io",
            Error::Image { .. } => "image",
        }
    }

    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Format {
            context: context.into(),
            detail: detail.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
