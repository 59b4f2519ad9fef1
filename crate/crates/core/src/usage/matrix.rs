use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::UsageError;
use crate::encoder::EmbeddingRecord;
use crate::stats::cosine_similarity;

/// Where the values of a [`SimilarityMatrix`] came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MatrixSource {
    Human,
    /// Digest of the encoder checkpoint that produced the embeddings.
    Encoder(String),
}

impl Serialize for MatrixSource {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            MatrixSource::Human => s.serialize_str("human"),
            MatrixSource::Encoder(id) => s.serialize_str(id),
        }
    }
}

impl<'de> Deserialize<'de> for MatrixSource {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(if s == "human" {
            MatrixSource::Human
        } else {
            MatrixSource::Encoder(s)
        })
    }
}

/// Square symmetric matrix of usage-pair similarities with optional missing
/// cells, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "MatrixJson", try_from = "MatrixJson")]
pub struct SimilarityMatrix {
    word: String,
    usage_ids: Vec<String>,
    values: Vec<Option<f64>>,
    source: MatrixSource,
}

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    word: String,
    source: MatrixSource,
    usage_ids: Vec<String>,
    values: Vec<Vec<Option<f64>>>,
}

impl From<SimilarityMatrix> for MatrixJson {
    fn from(m: SimilarityMatrix) -> Self {
        let n = m.dim();
        MatrixJson {
            values: (0..n)
                .map(|i| m.values[i * n..(i + 1) * n].to_vec())
                .collect(),
            word: m.word,
            source: m.source,
            usage_ids: m.usage_ids,
        }
    }
}

impl TryFrom<MatrixJson> for SimilarityMatrix {
    type Error = String;

    fn try_from(j: MatrixJson) -> Result<Self, Self::Error> {
        let n = j.usage_ids.len();
        if j.values.len() != n || j.values.iter().any(|r| r.len() != n) {
            return Err(format!("matrix for `{}` is not {n}x{n}", j.word));
        }
        let m = SimilarityMatrix {
            word: j.word,
            usage_ids: j.usage_ids,
            values: j.values.into_iter().flatten().collect(),
            source: j.source,
        };
        if !m.is_symmetric() {
            return Err(format!("matrix for `{}` is not symmetric", m.word));
        }
        Ok(m)
    }
}

impl SimilarityMatrix {
    /// A matrix with every cell missing.
    pub fn empty(word: impl Into<String>, usage_ids: Vec<String>, source: MatrixSource) -> Self {
        let n = usage_ids.len();
        SimilarityMatrix {
            word: word.into(),
            usage_ids,
            values: vec![None; n * n],
            source,
        }
    }

    /// Builds a complete matrix from a dense row-major table.
    pub fn from_dense(
        word: impl Into<String>,
        usage_ids: Vec<String>,
        rows: &[Vec<f64>],
        source: MatrixSource,
    ) -> Self {
        let mut m = SimilarityMatrix::empty(word, usage_ids, source);
        let n = m.dim();
        assert!(
            rows.len() == n && rows.iter().all(|r| r.len() == n),
            "rows must be {n}x{n}"
        );
        for (i, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                m.values[i * n + j] = Some(*v);
            }
        }
        m
    }

    pub fn word(&self) -> &str {
        &self.word
    }

    pub fn usage_ids(&self) -> &[String] {
        &self.usage_ids
    }

    pub fn source(&self) -> &MatrixSource {
        &self.source
    }

    pub fn dim(&self) -> usize {
        self.usage_ids.len()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i * self.dim() + j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, value: Option<f64>) {
        let n = self.dim();
        self.values[i * n + j] = value;
        self.values[j * n + i] = value;
    }

    /// Defined cells strictly above the diagonal, row-major.
    pub fn defined_upper_cells(&self) -> Vec<(usize, usize)> {
        let n = self.dim();
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.get(i, j).is_some())
            .collect()
    }

    /// Same usage ids in the same order and the same off-diagonal
    /// missing-cell pattern.
    pub fn is_aligned_with(&self, other: &SimilarityMatrix) -> bool {
        let n = self.dim();
        self.usage_ids == other.usage_ids
            && (0..n).all(|i| {
                (0..n).all(|j| i == j || self.get(i, j).is_some() == other.get(i, j).is_some())
            })
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

/// Fills every defined off-diagonal cell of `mask` with the cosine similarity
/// of the corresponding embeddings; the diagonal is 1.0.
pub fn build_model_matrix(
    records: &[EmbeddingRecord],
    word: &str,
    mask: &SimilarityMatrix,
) -> Result<SimilarityMatrix, UsageError> {
    let by_id: BTreeMap<&str, &EmbeddingRecord> =
        records.iter().map(|r| (r.usage_id.as_str(), r)).collect();
    let mut encoder_ids = records.iter().map(|r| r.encoder_id.as_str());
    let encoder_id = encoder_ids.next().unwrap_or_default().to_string();
    if encoder_ids.any(|id| id != encoder_id) {
        return Err(UsageError::MixedEncoders(word.to_string()));
    }

    let vectors = mask
        .usage_ids()
        .iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .map(|r| r.vector.as_slice())
                .ok_or_else(|| UsageError::MissingEmbedding {
                    word: word.to_string(),
                    usage_id: id.clone(),
                })
        })
        .collect::<Result<Vec<&[f64]>, _>>()?;

    let mut out = SimilarityMatrix::empty(
        word,
        mask.usage_ids().to_vec(),
        MatrixSource::Encoder(encoder_id),
    );
    for i in 0..out.dim() {
        out.set(i, i, Some(1.0));
    }
    for (i, j) in mask.defined_upper_cells() {
        let sim =
            cosine_similarity(vectors[i], vectors[j]).map_err(|source| UsageError::Similarity {
                word: word.to_string(),
                source,
            })?;
        out.set(i, j, Some(sim));
    }
    Ok(out)
}
