use std::collections::BTreeMap;

use super::StatsError;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterDistances {
    /// Mean pairwise Euclidean distance within each cluster (0 for singletons).
    pub intra: BTreeMap<String, f64>,
    /// Mean distance over all cross pairs, keyed by the sorted cluster pair.
    pub inter: BTreeMap<(String, String), f64>,
}

pub fn cluster_distances<S: AsRef<str>>(
    points: &[Vec<f64>],
    labels: &[S],
) -> Result<ClusterDistances, StatsError> {
    if points.len() != labels.len() {
        return Err(StatsError::DimensionMismatch(points.len(), labels.len()));
    }
    if points.is_empty() {
        return Err(StatsError::Empty);
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(StatsError::DimensionMismatch(dim, p.len()));
    }

    let mut clusters: BTreeMap<&str, Vec<&[f64]>> = BTreeMap::new();
    for (p, l) in points.iter().zip(labels) {
        clusters.entry(l.as_ref()).or_default().push(p);
    }

    let mean_dist = |pairs: &mut dyn Iterator<Item = (&[f64], &[f64])>| -> f64 {
        let (sum, count) = pairs.fold((0.0, 0usize), |(s, c), (a, b)| (s + euclid(a, b), c + 1));
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    };

    let intra = clusters
        .iter()
        .map(|(label, members)| {
            let mut pairs = members
                .iter()
                .enumerate()
                .flat_map(|(i, a)| members[i + 1..].iter().map(move |b| (*a, *b)));
            (label.to_string(), mean_dist(&mut pairs))
        })
        .collect();

    let labels: Vec<&str> = clusters.keys().copied().collect();
    let mut inter = BTreeMap::new();
    for (i, la) in labels.iter().enumerate() {
        for lb in &labels[i + 1..] {
            let (ma, mb) = (&clusters[la], &clusters[lb]);
            let mut pairs = ma.iter().flat_map(|a| mb.iter().map(move |b| (*a, *b)));
            inter.insert((la.to_string(), lb.to_string()), mean_dist(&mut pairs));
        }
    }
    Ok(ClusterDistances { intra, inter })
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}
