use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::StatsError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    /// `n` rows of `d` coordinates.
    pub coordinates: Vec<Vec<f64>>,
    /// `sigma_i^2 / (n - 1)`, non-increasing.
    pub explained_variance: Vec<f64>,
    /// `d` orthonormal directions in the input space.
    pub components: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
}

/// Projects mean-centered rows onto their top `d` principal directions.
///
/// Directions come from the SVD of the centered data. Each direction is
/// oriented so that its largest-magnitude entry is positive (first one wins
/// ties), which makes coordinates reproducible across runs.
pub fn pca_project(vectors: &[Vec<f64>], d: usize) -> Result<Projection, StatsError> {
    let n = vectors.len();
    if n < 2 {
        return Err(StatsError::TooFew { needed: 2, got: n });
    }
    let dim = vectors[0].len();
    if let Some(bad) = vectors.iter().find(|v| v.len() != dim) {
        return Err(StatsError::DimensionMismatch(dim, bad.len()));
    }
    if d == 0 || d > (n - 1).min(dim) {
        return Err(StatsError::InvalidArgument(format!(
            "d = {d} must be in 1..={} for {n} points of dimension {dim}",
            (n - 1).min(dim)
        )));
    }
    if vectors.iter().flatten().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }

    let mean: Vec<f64> = (0..dim)
        .map(|c| vectors.iter().map(|v| v[c]).sum::<f64>() / n as f64)
        .collect();
    let centered = DMatrix::from_fn(n, dim, |r, c| vectors[r][c] - mean[c]);
    if centered.iter().all(|v| *v == 0.0) {
        return Err(StatsError::ZeroVariance);
    }

    let svd = centered.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let mut components = Vec::with_capacity(d);
    let mut explained_variance = Vec::with_capacity(d);
    for &k in order.iter().take(d) {
        let mut dir: Vec<f64> = v_t.row(k).iter().copied().collect();
        orient(&mut dir);
        components.push(dir);
        let s = svd.singular_values[k];
        explained_variance.push(s * s / (n - 1) as f64);
    }

    let coordinates = (0..n)
        .map(|r| {
            components
                .iter()
                .map(|c| centered.row(r).iter().zip(c).map(|(x, y)| x * y).sum())
                .collect()
        })
        .collect();
    Ok(Projection {
        coordinates,
        explained_variance,
        components,
        mean,
    })
}

/// Flips `dir` so its largest-magnitude entry is positive.
pub(crate) fn orient(dir: &mut [f64]) {
    let mut best = 0;
    for (i, v) in dir.iter().enumerate() {
        if v.abs() > dir[best].abs() {
            best = i;
        }
    }
    if dir[best] < 0.0 {
        dir.iter_mut().for_each(|v| *v = -*v);
    }
}
