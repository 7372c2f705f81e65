use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid architecture at layer {layer}: {reason}")]
    Architecture { layer: usize, reason: String },

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("weights belong to a different architecture (expected fingerprint {expected:016x}, got {got:016x})")]
    Fingerprint { expected: u64, got: u64 },

    #[error("label {label} at position {index} is out of range for {classes} classes")]
    Label {
        index: usize,
        label: usize,
        classes: usize,
    },

    #[error("non-finite gradient in tensor `{tensor}`")]
    NonFiniteGradient { tensor: String },

    #[error("non-finite loss on device {device}, batch {batch} (l_class={l_class}, l_moon={l_moon}, l_glob={l_glob})")]
    NonFiniteLoss {
        device: usize,
        batch: usize,
        l_class: f64,
        l_moon: f64,
        l_glob: f64,
    },

    #[error("temperature must be positive, got {0}")]
    Temperature(f64),

    #[error("{0}")]
    InvalidArgument(String),

    #[error("partition failed: {0}")]
    Partition(String),

    #[error("{}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },

    #[error("device {device}: {source}")]
    Client {
        device: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
