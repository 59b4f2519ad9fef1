use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

use super::normalize::preprocess_text;
use super::{CorpusError, DecadeLabel, RawDocument};
use crate::digest::{sha256_hex, FieldHasher};

/// Inclusive range of decades, e.g. 1910s through 2000s.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecadeRange {
    pub first: DecadeLabel,
    pub last: DecadeLabel,
}

impl DecadeRange {
    pub fn new(first: DecadeLabel, last: DecadeLabel) -> Result<Self, CorpusError> {
        if first > last {
            return Err(CorpusError::InvalidRange {
                start: first.start_year(),
                end: last.start_year(),
            });
        }
        Ok(DecadeRange { first, last })
    }

    /// Parses `1910:2000`.
    pub fn parse(spec: &str) -> Result<Self, CorpusError> {
        let bad = || CorpusError::InvalidRange { start: 0, end: 0 };
        let (a, b) = spec.split_once(':').ok_or_else(bad)?;
        let a: i32 = a.trim().parse().map_err(|_| bad())?;
        let b: i32 = b.trim().parse().map_err(|_| bad())?;
        DecadeRange::new(DecadeLabel::new(a)?, DecadeLabel::new(b)?)
    }

    pub fn contains_year(&self, year: i32) -> bool {
        (self.first.start_year()..=self.last.end_year()).contains(&year)
    }

    pub fn decades(&self) -> impl Iterator<Item = DecadeLabel> {
        let last = self.last;
        std::iter::successors(Some(self.first), move |d| {
            Some(d.next()).filter(|n| *n <= last)
        })
    }
}

/// Partition of a document collection into decades.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub range: DecadeRange,
    /// Sorted document ids per decade; every decade of the range is present.
    pub decades: BTreeMap<DecadeLabel, Vec<String>>,
    /// Whitespace token count per decade.
    pub token_counts: BTreeMap<DecadeLabel, u64>,
    /// Documents whose year fell outside the range.
    pub excluded: Vec<String>,
    pub excluded_count: usize,
    pub seed: u64,
    pub config_digest: String,
    pub content_digest: String,
}

impl CorpusManifest {
    pub fn doc_count(&self) -> usize {
        self.decades.values().map(Vec::len).sum()
    }

    pub fn decade_of(&self, doc_id: &str) -> Option<DecadeLabel> {
        self.decades
            .iter()
            .find(|(_, ids)| ids.binary_search_by(|id| id.as_str().cmp(doc_id)).is_ok())
            .map(|(d, _)| *d)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

/// Assigns every in-range document to the decade containing its year.
pub fn bucket_by_decade(
    docs: &[RawDocument],
    range: DecadeRange,
) -> Result<CorpusManifest, CorpusError> {
    let mut seen = BTreeSet::new();
    for doc in docs {
        if !seen.insert(doc.doc_id.as_str()) {
            return Err(CorpusError::DuplicateDocId(doc.doc_id.clone()));
        }
    }

    let mut decades: BTreeMap<DecadeLabel, Vec<String>> =
        range.decades().map(|d| (d, Vec::new())).collect();
    let mut token_counts: BTreeMap<DecadeLabel, u64> = range.decades().map(|d| (d, 0)).collect();
    let mut excluded = Vec::new();
    let mut text_digests = BTreeMap::new();

    for doc in docs {
        if !range.contains_year(doc.year) {
            excluded.push(doc.doc_id.clone());
            continue;
        }
        let decade = doc.decade();
        decades
            .get_mut(&decade)
            .expect("decade in range")
            .push(doc.doc_id.clone());
        *token_counts.get_mut(&decade).expect("decade in range") +=
            doc.text.split_whitespace().count() as u64;
        text_digests.insert(doc.doc_id.as_str(), sha256_hex(&doc.text));
    }
    for ids in decades.values_mut() {
        ids.sort();
    }
    excluded.sort();

    let mut content = FieldHasher::new();
    for (decade, ids) in &decades {
        content.field(decade.start_year().to_le_bytes());
        for id in ids {
            content.field(id).field(&text_digests[id.as_str()]);
        }
    }
    let mut config = FieldHasher::new();
    config
        .field(range.first.start_year().to_le_bytes())
        .field(range.last.start_year().to_le_bytes());

    Ok(CorpusManifest {
        range,
        excluded_count: excluded.len(),
        decades,
        token_counts,
        excluded,
        seed: 0,
        config_digest: config.finish(),
        content_digest: content.finish(),
    })
}

/// Documents whose normalized token stream contains `keyword` as a whole token.
pub fn select_by_keyword(
    docs: &[RawDocument],
    keyword: &str,
) -> Result<Vec<RawDocument>, CorpusError> {
    let normalized = preprocess_text(keyword);
    if normalized.is_empty() || normalized.contains(' ') {
        return Err(CorpusError::InvalidKeyword(keyword.to_string()));
    }
    Ok(docs
        .iter()
        .filter(|doc| {
            preprocess_text(&doc.text)
                .split(' ')
                .any(|t| t == normalized)
        })
        .cloned()
        .collect())
}
