use std::fmt;

/// Library error type.
#[derive(Debug)]
pub enum Error {
    Io(std::io::Error),
    /// Corpus file contained no usable documents.
    EmptyCorpus(String),
    /// Requested vocabulary size cannot hold the reserved special tokens.
    VocabTooSmall { size: usize, specials: usize },
    /// An operation received an empty sequence where one is required.
    EmptySequence(&'static str),
    /// Fewer pairs than a split or batch requires.
    NotEnoughData(String),
    /// Mismatched batch sizes between fake and real inputs.
    BatchSizeMismatch { fake: usize, real: usize },
    /// A scalar argument fell outside its valid range.
    OutOfRange { what: &'static str, value: f64 },
    /// NaN or infinity where a finite value is required.
    NonFinite(&'static str),
    /// Bad key/value in a config file.
    Config(String),
    /// Checkpoint could not be read, or its version is unknown.
    Checkpoint(String),
    /// Checkpoint was produced under a different vocabulary.
    VocabHashMismatch { expected: u64, found: u64 },
    /// Candidates and references files differ in line count.
    LineCountMismatch { candidates: usize, references: usize },
    /// Index out of range for a sentence list or similar.
    IndexOutOfRange { index: usize, len: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Io(e) => write!(f, "io error: {e}"),
            Error::EmptyCorpus(p) => write!(f, "corpus {p} contains no documents"),
            Error::VocabTooSmall { size, specials } => write!(
                f,
                "vocabulary size {size} cannot hold {specials} special tokens"
            ),
            Error::EmptySequence(what) => write!(f, "{what} must be non-empty"),
            Error::NotEnoughData(m) => write!(f, "not enough data: {m}"),
            Error::BatchSizeMismatch { fake, real } => {
                write!(f, "batch size mismatch: {fake} fake vs {real} real")
            }
            Error::OutOfRange { what, value } => write!(f, "{what} = {value} out of range"),
            Error::NonFinite(what) => write!(f, "non-finite value in {what}"),
            Error::Config(m) => write!(f, "config error: {m}"),
            Error::Checkpoint(m) => write!(f, "checkpoint error: {m}"),
            Error::VocabHashMismatch { expected, found } => write!(
                f,
                "vocabulary hash mismatch: checkpoint {found:#x}, current {expected:#x}"
            ),
            Error::LineCountMismatch {
                candidates,
                references,
            } => write!(
                f,
                "line count mismatch: {candidates} candidates vs {references} references"
            ),
            Error::IndexOutOfRange { index, len } => {
                write!(f, "index {index} out of range for length {len}")
            }
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}
