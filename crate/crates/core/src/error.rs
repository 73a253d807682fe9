use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the engine can report.
///
/// [`Error::code`] gives a stable machine-readable identifier that the CLI
/// and HTTP layers surface verbatim.
#[derive(Debug, Error)]
pub enum Error {
    #[error("sketch has no strokes")]
    EmptySketch,

    #[error("delta sequence is empty")]
    EmptyInput,

    #[error("sketch is degenerate: all points coincide")]
    DegenerateSketch,

    #[error("invalid sketch: {0}")]
    InvalidSketch(String),

    #[error("invalid label {0:?}")]
    InvalidLabel(String),

    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("{}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },

    #[error("no category files found in {}", .0.display())]
    EmptyCorpus(PathBuf),

    #[error("duplicate category label {0}")]
    DuplicateLabel(String),

    #[error("expected dimension {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("vector references unknown sketch {0}")]
    UnknownSketchRef(String),

    #[error("no feature vector available for sketch {0}")]
    MissingVector(String),

    #[error("{category} ({have} sketches < k={k})")]
    TooFewPoints {
        category: String,
        have: usize,
        k: usize,
    },

    #[error("unknown category {0}")]
    UnknownCategory(String),

    #[error("index format version {found} is not supported (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("corrupt index: {0}")]
    CorruptIndex(String),

    #[error("no embedding for {}", .0.join(", "))]
    MissingToken(Vec<String>),

    #[error("need at least {need} candidates, have {have}")]
    InsufficientCandidates { need: usize, have: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("novelty bucket {0} is empty")]
    EmptyBucket(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::EmptySketch => "EmptySketch",
            Error::EmptyInput => "EmptyInput",
            Error::DegenerateSketch => "DegenerateSketch",
            Error::InvalidSketch(_) => "InvalidSketch",
            Error::InvalidLabel(_) => "InvalidLabel",
            Error::FileNotFound(_) => "FileNotFound",
            Error::Format { .. } => "FormatError",
            Error::EmptyCorpus(_) => "EmptyCorpus",
            Error::DuplicateLabel(_) => "DuplicateLabel",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::UnknownSketchRef(_) => "UnknownSketchRef",
            Error::MissingVector(_) => "MissingVector",
            Error::TooFewPoints { .. } => "TooFewPoints",
            Error::UnknownCategory(_) => "UnknownCategory",
            Error::VersionMismatch { .. } => "VersionMismatch",
            Error::CorruptIndex(_) => "CorruptIndex",
            Error::MissingToken(_) => "MissingToken",
            Error::InsufficientCandidates { .. } => "InsufficientCandidates",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::EmptyBucket(_) => "EmptyBucket",
            Error::Io(_) => "IoError",
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
