//! Corpus preparation: normalization, sentence splitting, decade bucketing and
//! bit-exact pre-training file emission.

mod bucket;
mod io;
mod normalize;
mod split;

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::PathBuf;
use thiserror::Error;

pub use bucket::{bucket_by_decade, select_by_keyword, CorpusManifest, DecadeRange};
pub use io::{
    decade_file_name, load_documents, parse_decade_file_name, read_decade_corpus,
    read_pretraining_file, write_pretraining_corpus, WriteReport,
};
pub use normalize::{
    normalize_text, preprocess_text, rejoin_contractions, CLITICS, DEFAULT_ABBREVIATIONS,
};
pub use split::{split_sentences, SentenceSplitter};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("duplicate document id `{0}`")]
    DuplicateDocId(String),
    #[error("invalid decade range {start}s..{end}s")]
    InvalidRange { start: i32, end: i32 },
    #[error("year {0} is not the start of a decade")]
    NotDecadeStart(i32),
    #[error("keyword must be a single non-empty normalized token, got `{0}`")]
    InvalidKeyword(String),
    #[error("truncate fraction {0} outside [0, 1]")]
    InvalidFraction(f64),
    #[error("manifest references missing document `{0}`")]
    MissingDocument(String),
    #[error("document `{0}` has no sentences to write")]
    EmptyDocument(String),
    #[error("malformed input {path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CorpusError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.into(),
            source,
        }
    }
}

/// A decade, identified by its first year (`1910` is the 1910s).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i32", into = "i32")]
pub struct DecadeLabel(i32);

impl DecadeLabel {
    pub fn new(start_year: i32) -> Result<Self, CorpusError> {
        if start_year.rem_euclid(10) != 0 {
            return Err(CorpusError::NotDecadeStart(start_year));
        }
        Ok(DecadeLabel(start_year))
    }

    pub fn containing(year: i32) -> Self {
        DecadeLabel(year - year.rem_euclid(10))
    }

    pub fn start_year(self) -> i32 {
        self.0
    }

    pub fn end_year(self) -> i32 {
        self.0 + 9
    }

    pub fn contains(self, year: i32) -> bool {
        (self.0..=self.end_year()).contains(&year)
    }

    pub fn next(self) -> Self {
        DecadeLabel(self.0 + 10)
    }
}

impl fmt::Display for DecadeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}s", self.0)
    }
}

impl TryFrom<i32> for DecadeLabel {
    type Error = CorpusError;

    fn try_from(value: i32) -> Result<Self, Self::Error> {
        DecadeLabel::new(value)
    }
}

impl From<DecadeLabel> for i32 {
    fn from(value: DecadeLabel) -> Self {
        value.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub doc_id: String,
    pub year: i32,
    pub genre: Option<String>,
    pub text: String,
}

impl RawDocument {
    pub fn new(doc_id: impl Into<String>, year: i32, text: impl Into<String>) -> Self {
        RawDocument {
            doc_id: doc_id.into(),
            year,
            genre: None,
            text: text.into(),
        }
    }

    pub fn decade(&self) -> DecadeLabel {
        DecadeLabel::containing(self.year)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub doc_id: String,
    pub index: usize,
    pub tokens: Vec<String>,
    pub decade: DecadeLabel,
}

impl Sentence {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}
