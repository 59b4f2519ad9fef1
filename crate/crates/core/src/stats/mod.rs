//! Numerical analysis: similarity, rank correlation, the Mantel permutation
//! test, embedding shift, PCA projection and cluster distances.

mod cluster;
mod mantel;
mod pca;
mod rank;
mod shift;

use thiserror::Error;

pub use cluster::{cluster_distances, ClusterDistances};
pub use mantel::{
    mantel_test, MantelOptions, MantelResult, PermutationMode, Tail, EXHAUSTIVE_MAX_DIM,
};
pub use pca::{pca_project, Projection};
pub use rank::{average_ranks, pearson, spearman};
pub use shift::{embedding_shift, pairwise_cosines, PairShift, ShiftReport};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("non-finite input")]
    NonFinite,
    #[error("need at least {needed} values, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("constant input: correlation undefined")]
    Constant,
    #[error("matrices are not aligned: {0}")]
    Misaligned(String),
    #[error("pair sets differ: {0}")]
    KeyMismatch(String),
    #[error("empty input")]
    Empty,
    #[error("all rows identical: zero variance")]
    ZeroVariance,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// `dot(u, v) / (|u| |v|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, StatsError> {
    if u.len() != v.len() {
        return Err(StatsError::DimensionMismatch(u.len(), v.len()));
    }
    if u.iter().chain(v).any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|b| b * b).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(StatsError::ZeroNorm);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}
