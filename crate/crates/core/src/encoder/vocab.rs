use std::collections::HashMap;

use super::EncoderError;

const SHIPPED: &str = include_str!("../../data/vocab.txt");
const MAX_WORD_CHARS: usize = 100;

pub(crate) const PAD: &str = "[PAD]";
pub(crate) const UNK: &str = "[UNK]";
pub(crate) const CLS: &str = "[CLS]";
pub(crate) const SEP: &str = "[SEP]";
pub(crate) const MASK: &str = "[MASK]";

/// Fixed subword vocabulary with greedy longest-match-first segmentation.
/// Word-internal pieces carry a `##` prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    /// The small vocabulary bundled with the crate.
    pub fn shipped() -> Self {
        Vocab::from_tokens(SHIPPED.lines().map(str::to_string).collect())
            .expect("bundled vocabulary is valid")
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, EncoderError> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.contains(char::is_whitespace) {
                return Err(EncoderError::Format(format!("bad vocabulary entry `{t}`")));
            }
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(EncoderError::Format(format!(
                    "duplicate vocabulary entry `{t}`"
                )));
            }
        }
        for special in [PAD, UNK, CLS, SEP, MASK] {
            if !index.contains_key(special) {
                return Err(EncoderError::Format(format!("vocabulary lacks {special}")));
            }
        }
        Ok(Vocab { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub(crate) fn special(&self, token: &str) -> u32 {
        self.index[token]
    }

    pub(crate) fn is_special(&self, id: u32) -> bool {
        let t = self.token(id);
        t.starts_with('[') && t.ends_with(']') && t.len() > 2
    }

    /// Splits one word into subword ids; `[UNK]` when no segmentation exists.
    pub fn wordpiece(&self, word: &str) -> Vec<u32> {
        let chars: Vec<char> = word.chars().collect();
        if chars.is_empty() || chars.len() > MAX_WORD_CHARS {
            return vec![self.special(UNK)];
        }
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while start < end {
                let mut piece: String = chars[start..end].iter().collect();
                if start > 0 {
                    piece.insert_str(0, "##");
                }
                if let Some(id) = self.id(&piece) {
                    found = Some(id);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(id) => pieces.push(id),
                None => return vec![self.special(UNK)],
            }
            start = end;
        }
        pieces
    }
}
