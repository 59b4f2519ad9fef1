use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use super::{MatrixSource, SimilarityMatrix, Usage, UsageError};
use crate::corpus::{preprocess_text, DecadeLabel};
use crate::digest::FieldHasher;

pub const SCORES_PER_PAIR: usize = 5;

const HEADER: [&str; 7 + SCORES_PER_PAIR] = [
    "word",
    "usage_a_text",
    "usage_a_focus_offset",
    "usage_a_interval",
    "usage_b_text",
    "usage_b_focus_offset",
    "usage_b_interval",
    "score_1",
    "score_2",
    "score_3",
    "score_4",
    "score_5",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedPair {
    pub word: String,
    pub usage_a: Usage,
    pub usage_b: Usage,
    pub scores: Vec<f64>,
    pub mean_score: f64,
}

impl AnnotatedPair {
    pub fn new(word: String, usage_a: Usage, usage_b: Usage, scores: Vec<f64>) -> Self {
        let mean_score = scores.iter().sum::<f64>() / scores.len() as f64;
        AnnotatedPair {
            word,
            usage_a,
            usage_b,
            scores,
            mean_score,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DupsDataset {
    /// Sorted distinct focus words.
    pub words: Vec<String>,
    pub pairs: Vec<AnnotatedPair>,
}

impl DupsDataset {
    pub fn pair_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for p in &self.pairs {
            *counts.entry(p.word.clone()).or_insert(0) += 1;
        }
        counts
    }

    /// Distinct usages of `word`, sorted by usage id.
    pub fn usages(&self, word: &str) -> Vec<Usage> {
        let mut by_id = BTreeMap::new();
        for p in self.pairs.iter().filter(|p| p.word == word) {
            for u in [&p.usage_a, &p.usage_b] {
                by_id.entry(u.usage_id.clone()).or_insert_with(|| u.clone());
            }
        }
        by_id.into_values().collect()
    }
}

/// Tokenizes a raw snippet whose focus word starts at character `char_offset`.
///
/// The text on either side of the offset is normalized separately, which
/// forces a token boundary at the focus word even when the word occurs more
/// than once in the snippet.
pub fn usage_from_snippet(
    word: &str,
    text: &str,
    char_offset: usize,
    interval: &str,
) -> Result<Usage, String> {
    let decade = parse_interval(interval)?;
    let split = text
        .char_indices()
        .map(|(b, _)| b)
        .chain(std::iter::once(text.len()))
        .nth(char_offset)
        .ok_or_else(|| format!("focus offset {char_offset} beyond snippet end"))?;
    let prefix = preprocess_text(&text[..split]);
    let suffix = preprocess_text(&text[split..]);
    let mut tokens: Vec<String> = prefix.split_whitespace().map(String::from).collect();
    let focus_index = tokens.len();
    tokens.extend(suffix.split_whitespace().map(String::from));
    if focus_index >= tokens.len() {
        return Err(format!(
            "focus offset {char_offset} points past the last token"
        ));
    }
    let normalized_word = preprocess_text(word);
    if !tokens[focus_index].starts_with(&normalized_word) {
        log::warn!(
            "focus token `{}` does not start with `{normalized_word}`",
            tokens[focus_index]
        );
    }
    let mut id = FieldHasher::new();
    id.field(text)
        .field(char_offset.to_le_bytes())
        .field(interval);
    Ok(Usage {
        usage_id: format!("{normalized_word}:{}", &id.finish()[..12]),
        word: normalized_word,
        tokens,
        focus_index,
        decade,
    })
}

fn parse_interval(interval: &str) -> Result<DecadeLabel, String> {
    let interval = interval.trim();
    if interval.is_empty() {
        return Err("missing decade label".into());
    }
    let start = interval
        .split(['-', '\u{2013}', '\u{2014}'])
        .next()
        .unwrap_or_default()
        .trim();
    let year: i32 = start
        .parse()
        .map_err(|_| format!("bad decade label `{interval}`"))?;
    Ok(DecadeLabel::containing(year))
}

/// Reads a usage-pair judgment CSV (see the crate README for the columns).
pub fn load_dups(path: &Path) -> Result<DupsDataset, UsageError> {
    let file = std::fs::File::open(path).map_err(|source| UsageError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_dups(file, path)
}

pub fn parse_dups<R: Read>(reader: R, path: &Path) -> Result<DupsDataset, UsageError> {
    let schema = |line: u64, message: String| UsageError::Schema {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| schema(1, e.to_string()))?.clone();
    if header.iter().map(str::trim).ne(HEADER.iter().copied()) {
        return Err(schema(1, format!("expected header {}", HEADER.join(","))));
    }

    let mut pairs = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            schema(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != HEADER.len() {
            return Err(schema(
                line,
                format!("expected {} columns, found {}", HEADER.len(), record.len()),
            ));
        }
        let word = preprocess_text(&record[0]);
        if word.is_empty() || word.contains(' ') {
            return Err(schema(line, format!("bad focus word `{}`", &record[0])));
        }
        let offset = |col: usize| -> Result<usize, UsageError> {
            record[col]
                .trim()
                .parse()
                .map_err(|_| schema(line, format!("bad focus offset `{}`", &record[col])))
        };
        let usage_a = usage_from_snippet(&word, &record[1], offset(2)?, &record[3])
            .map_err(|m| schema(line, format!("usage a: {m}")))?;
        let usage_b = usage_from_snippet(&word, &record[4], offset(5)?, &record[6])
            .map_err(|m| schema(line, format!("usage b: {m}")))?;
        let scores = (7..HEADER.len())
            .map(|col| {
                let raw = record[col].trim();
                match raw.parse::<f64>() {
                    Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
                    _ => Err(schema(
                        line,
                        format!("non-numeric or non-positive score `{raw}`"),
                    )),
                }
            })
            .collect::<Result<Vec<f64>, _>>()?;
        pairs.push(AnnotatedPair::new(word, usage_a, usage_b, scores));
    }

    let mut words: Vec<String> = pairs.iter().map(|p| p.word.clone()).collect();
    words.sort();
    words.dedup();
    Ok(DupsDataset { words, pairs })
}

/// Square matrix over every usage of `word` that appears in an annotated pair.
///
/// Annotated cells hold the mean human score (mirrored); a pair annotated more
/// than once gets the average of its means. Everything else stays missing.
pub fn build_human_matrix(
    dataset: &DupsDataset,
    word: &str,
) -> Result<SimilarityMatrix, UsageError> {
    if !dataset.words.iter().any(|w| w == word) {
        return Err(UsageError::UnknownWord(word.to_string()));
    }
    let ids: Vec<String> = dataset
        .usages(word)
        .into_iter()
        .map(|u| u.usage_id)
        .collect();
    let index: BTreeMap<&str, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();

    let mut cells: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
    for p in dataset.pairs.iter().filter(|p| p.word == word) {
        let a = index[p.usage_a.usage_id.as_str()];
        let b = index[p.usage_b.usage_id.as_str()];
        if a == b {
            log::warn!(
                "skipping self-pair for usage {} of `{word}`",
                p.usage_a.usage_id
            );
            continue;
        }
        let cell = cells.entry((a.min(b), a.max(b))).or_insert((0.0, 0));
        cell.0 += p.mean_score;
        cell.1 += 1;
    }
    let duplicates: usize = cells.values().map(|(_, n)| n - 1).sum();
    if duplicates > 0 {
        log::info!("`{word}`: averaged {duplicates} duplicate pair annotation(s)");
    }

    let mut m = SimilarityMatrix::empty(word, ids, MatrixSource::Human);
    for ((i, j), (sum, n)) in cells {
        m.set(i, j, Some(sum / n as f64));
    }
    Ok(m)
}
