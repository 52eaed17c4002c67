use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("utterance of {length} samples is shorter than the receptive field ({receptive_field})")]
    UtteranceTooShort { length: usize, receptive_field: usize },

    #[error("invalid interval [{begin}, {end}): begin must be < end")]
    InvalidInterval { begin: i64, end: i64 },

    #[error("invalid frame geometry: receptive field {receptive_field}, stride {stride} (need R >= S >= 1)")]
    InvalidGeometry { receptive_field: usize, stride: usize },

    #[error("lexicon must contain at least one word")]
    EmptyLexicon,

    #[error("duplicate word in lexicon: {0:?}")]
    DuplicateWord(String),

    #[error("word index {word} out of range for lexicon of {lexicon_size} words")]
    WordOutOfRange { word: usize, lexicon_size: usize },

    #[error("event [{begin}, {end}) lies outside the utterance [0, {length})")]
    EventOutOfBounds { begin: i64, end: i64, length: usize },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: not a readable WAV file: {message}")]
    WavFormat { path: PathBuf, message: String },

    #[error("{path}:{line}: malformed record: {message}")]
    RecordParse { path: PathBuf, line: usize, message: String },

    #[error("checkpoint format error: {0}")]
    CheckpointFormat(String),

    #[error("loss term {term} became non-finite at epoch {epoch}, batch {batch}")]
    TrainingDiverged { term: &'static str, epoch: usize, batch: usize },

    #[error("cannot place {events} events of up to {max_duration} samples in {length} samples")]
    InfeasiblePacking { events: usize, max_duration: usize, length: usize },

    #[error(
        "word templates {word_a} and {word_b} are too similar (cross-correlation {ncc:.3} >= 0.9)"
    )]
    TemplateCollision { word_a: usize, word_b: usize, ncc: f64 },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
