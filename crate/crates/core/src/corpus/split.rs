use std::collections::BTreeSet;

use super::normalize::DEFAULT_ABBREVIATIONS;
use super::{RawDocument, Sentence};

const CLOSERS: &[&str] = &["\"", "'", ")", "]", "}", "\u{201D}"];

/// Rule-based splitter over whitespace tokens.
///
/// A token ends a sentence when it is made only of `.`, `!`, `?` or when it
/// ends in one of them and is not a listed abbreviation. Runs of terminal
/// tokens and any closing quotes or brackets stay with the sentence they end.
#[derive(Debug, Clone)]
pub struct SentenceSplitter {
    abbreviations: BTreeSet<String>,
}

impl Default for SentenceSplitter {
    fn default() -> Self {
        SentenceSplitter::with_abbreviations(DEFAULT_ABBREVIATIONS.iter().copied())
    }
}

impl SentenceSplitter {
    pub fn with_abbreviations<I, S>(abbreviations: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        SentenceSplitter {
            abbreviations: abbreviations.into_iter().map(Into::into).collect(),
        }
    }

    fn is_terminal(&self, token: &str) -> bool {
        if token.chars().all(|c| matches!(c, '.' | '!' | '?')) {
            return true;
        }
        token.ends_with(['.', '!', '?']) && !self.abbreviations.contains(token)
    }

    /// Splits normalized text into token lists.
    pub fn split_tokens(&self, text: &str) -> Vec<Vec<String>> {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        if !tokens.iter().any(|t| t.chars().any(char::is_alphabetic)) {
            return Vec::new();
        }

        let mut sentences: Vec<Vec<String>> = Vec::new();
        let mut current: Vec<String> = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            current.push(tokens[i].to_string());
            if self.is_terminal(tokens[i]) {
                i += 1;
                while i < tokens.len()
                    && (self.is_terminal(tokens[i]) && !has_alphabetic(tokens[i])
                        || CLOSERS.contains(&tokens[i]))
                {
                    current.push(tokens[i].to_string());
                    i += 1;
                }
                push_sentence(&mut sentences, std::mem::take(&mut current));
            } else {
                i += 1;
            }
        }
        if !current.is_empty() {
            push_sentence(&mut sentences, current);
        }
        sentences
    }

    pub fn split(&self, doc: &RawDocument) -> Vec<Sentence> {
        let decade = doc.decade();
        self.split_tokens(&doc.text)
            .into_iter()
            .enumerate()
            .map(|(index, tokens)| Sentence {
                doc_id: doc.doc_id.clone(),
                index,
                tokens,
                decade,
            })
            .collect()
    }
}

fn has_alphabetic(token: &str) -> bool {
    token.chars().any(char::is_alphabetic)
}

// Segments without letters (stray punctuation, numbers) are folded into the
// previous sentence so that no sentence is letter-free.
fn push_sentence(sentences: &mut Vec<Vec<String>>, segment: Vec<String>) {
    let alphabetic = segment.iter().any(|t| has_alphabetic(t));
    match sentences.last_mut() {
        Some(prev) if !alphabetic => prev.extend(segment),
        _ => sentences.push(segment),
    }
}

/// Splits a normalized document with the default abbreviation list.
pub fn split_sentences(doc: &RawDocument) -> Vec<Sentence> {
    SentenceSplitter::default().split(doc)
}
