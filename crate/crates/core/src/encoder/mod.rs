//! Contextual encoders and focus-word representation extraction.
//!
//! Three encoders share one [`HiddenStates`] interface: a deterministic,
//! training-free mock; a toy trainable masked-LM; and an adapter that reads
//! per-layer vectors produced by an external model.

mod checkpoint;
mod config;
pub mod external;
mod extract;
mod mock;
mod toy;
mod train;
mod vocab;

use std::ops::Range;
use std::path::PathBuf;
use thiserror::Error;

pub use checkpoint::{Checkpoint, EncoderKind, TrainingRun};
pub use config::EncoderConfig;
pub use extract::{
    batch_extract, embeddings_to_jsonl, embeddings_to_jsonl_with, extract_usage_embedding,
    read_embeddings, write_embeddings, EmbeddingRecord, DEFAULT_LAST_K,
};
pub use train::{
    continue_pretraining, generate_instances, load_training_corpus, masked_accuracy, train_toy,
    TrainingCorpus, TrainingInstance,
};
pub use vocab::Vocab;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("invalid encoder config: {0}")]
    Config(String),
    #[error("empty token list")]
    EmptyInput,
    #[error("focus word index {index} out of range ({words} words encoded)")]
    FocusOutOfRange { index: usize, words: usize },
    #[error("last_k must be in 1..={layers}, got {last_k}")]
    InvalidLastK { last_k: usize, layers: usize },
    #[error("hidden states malformed: {0}")]
    Malformed(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("no decade corpora given")]
    NoCorpora,
    #[error("{0} encoder cannot be trained")]
    NotTrainable(&'static str),
    #[error("duplicate usage id `{0}`")]
    DuplicateUsage(String),
    #[error("usage `{usage_id}`: {source}")]
    Usage {
        usage_id: String,
        #[source]
        source: Box<EncoderError>,
    },
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error("corpus: {0}")]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error("external encoder: {0}")]
    External(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl EncoderError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        EncoderError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Per-layer hidden vectors for one encoded sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenStates {
    /// `layers[l][position]` is a vector of `hidden_dim` values, bottom layer first.
    layers: Vec<Vec<Vec<f64>>>,
    /// Subtoken positions of each encoded input word, disjoint and ordered.
    token_spans: Vec<Range<usize>>,
}

impl HiddenStates {
    pub fn new(
        layers: Vec<Vec<Vec<f64>>>,
        token_spans: Vec<Range<usize>>,
    ) -> Result<Self, EncoderError> {
        let malformed = |m: &str| Err(EncoderError::Malformed(m.to_string()));
        let Some(first) = layers.first() else {
            return malformed("no layers");
        };
        let seq = first.len();
        let dim = first.first().map_or(0, Vec::len);
        if dim == 0 {
            return malformed("empty sequence or zero hidden dimension");
        }
        if layers
            .iter()
            .any(|l| l.len() != seq || l.iter().any(|v| v.len() != dim))
        {
            return malformed("layers differ in shape");
        }
        let mut cursor = 0;
        for span in &token_spans {
            if span.start < cursor || span.start >= span.end || span.end > seq {
                return malformed("token spans must be non-empty, ordered, disjoint and in range");
            }
            cursor = span.end;
        }
        Ok(HiddenStates {
            layers,
            token_spans,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn seq_len(&self) -> usize {
        self.layers[0].len()
    }

    pub fn hidden_dim(&self) -> usize {
        self.layers[0][0].len()
    }

    pub fn layers(&self) -> &[Vec<Vec<f64>>] {
        &self.layers
    }

    pub fn token_spans(&self) -> &[Range<usize>] {
        &self.token_spans
    }

    /// Multiplies every hidden value by `c`.
    pub fn scaled(&self, c: f64) -> HiddenStates {
        HiddenStates {
            layers: self
                .layers
                .iter()
                .map(|l| {
                    l.iter()
                        .map(|v| v.iter().map(|x| x * c).collect())
                        .collect()
                })
                .collect(),
            token_spans: self.token_spans.clone(),
        }
    }
}

/// Encodes `tokens` with the encoder stored in `checkpoint`.
pub fn encode(checkpoint: &Checkpoint, tokens: &[String]) -> Result<HiddenStates, EncoderError> {
    checkpoint.encode(tokens)
}
