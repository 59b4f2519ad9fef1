//! Focus-word usages, human usage-pair judgments and per-word similarity
//! matrices.

mod dups;
mod matrix;

use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

use crate::corpus::{DecadeLabel, Sentence};
use crate::stats::StatsError;

pub use dups::{
    build_human_matrix, load_dups, parse_dups, usage_from_snippet, AnnotatedPair, DupsDataset,
    SCORES_PER_PAIR,
};
pub use matrix::{build_model_matrix, MatrixSource, SimilarityMatrix};

#[derive(Debug, Error)]
pub enum UsageError {
    #[error("{path}: line {line}: {message}")]
    Schema {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("word `{0}` does not occur in the dataset")]
    UnknownWord(String),
    #[error("no embedding for usage `{usage_id}` of `{word}`")]
    MissingEmbedding { word: String, usage_id: String },
    #[error("embeddings for `{0}` come from more than one encoder")]
    MixedEncoders(String),
    #[error("similarity for `{word}`: {source}")]
    Similarity {
        word: String,
        #[source]
        source: StatsError,
    },
}

/// One occurrence of a focus word in a tokenized sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub usage_id: String,
    pub word: String,
    pub tokens: Vec<String>,
    pub focus_index: usize,
    pub decade: DecadeLabel,
}

impl Usage {
    pub fn focus_token(&self) -> &str {
        &self.tokens[self.focus_index]
    }
}

/// Every occurrence of `word` as a whole token, in corpus order.
///
/// Usage ids are `<doc_id>:<sentence index>:<token index>`.
pub fn find_usages(sentences: &[Sentence], word: &str) -> Vec<Usage> {
    sentences
        .iter()
        .flat_map(|s| {
            s.tokens
                .iter()
                .enumerate()
                .filter(move |(_, t)| *t == word)
                .map(move |(i, _)| Usage {
                    usage_id: format!("{}:{}:{}", s.doc_id, s.index, i),
                    word: word.to_string(),
                    tokens: s.tokens.clone(),
                    focus_index: i,
                    decade: s.decade,
                })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sentence(doc: &str, index: usize, text: &str) -> Sentence {
        Sentence {
            doc_id: doc.into(),
            index,
            tokens: text.split(' ').map(String::from).collect(),
            decade: DecadeLabel::new(1930).unwrap(),
        }
    }

    #[test]
    fn repeated_word_gives_two_usages() {
        let s = vec![sentence("d", 0, "the coach met the coach")];
        let u = find_usages(&s, "coach");
        assert_eq!(u.len(), 2);
        assert_eq!(u[0].focus_index, 1);
        assert_eq!(u[1].focus_index, 4);
        assert_eq!(u[1].usage_id, "d:0:4");
        assert_eq!(u[1].focus_token(), "coach");
        assert_eq!(u[0].decade.start_year(), 1930);
    }

    #[test]
    fn absent_word() {
        let s = vec![
            sentence("d", 0, "the bus left"),
            sentence("d", 1, "coaches left"),
        ];
        assert!(find_usages(&s, "coach").is_empty());
    }

    proptest! {
        #[test]
        fn count_matches_naive_scan(sents in proptest::collection::vec(
            proptest::collection::vec(prop_oneof![Just("coach"), Just("bus"), Just("a")], 1..8), 0..10)) {
            let sentences: Vec<Sentence> = sents
                .iter()
                .enumerate()
                .map(|(i, toks)| sentence("d", i, &toks.join(" ")))
                .collect();
            let mut naive = 0;
            for s in &sentences {
                for t in &s.tokens {
                    if t == "coach" {
                        naive += 1;
                    }
                }
            }
            let usages = find_usages(&sentences, "coach");
            prop_assert_eq!(usages.len(), naive);
            for u in &usages {
                prop_assert_eq!(u.focus_token(), "coach");
            }
        }
    }
}
