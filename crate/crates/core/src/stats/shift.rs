use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::{cosine_similarity, StatsError};

pub type PairKey = (String, String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairShift {
    pub a: String,
    pub b: String,
    pub old: f64,
    pub new: f64,
    /// `new - old`; positive means the pair became more similar.
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub word: String,
    /// Sorted by pair key.
    pub shifts: Vec<PairShift>,
    pub average: f64,
    pub max_increase: PairShift,
    pub max_decrease: PairShift,
}

/// Per-pair similarity change between two encoders over identical pair sets.
///
/// Ties for the extremes go to the first pair in key order.
pub fn embedding_shift(
    word: &str,
    sims_old: &BTreeMap<PairKey, f64>,
    sims_new: &BTreeMap<PairKey, f64>,
) -> Result<ShiftReport, StatsError> {
    if sims_old.is_empty() {
        return Err(StatsError::Empty);
    }
    if let Some(k) = sims_old.keys().find(|k| !sims_new.contains_key(*k)) {
        return Err(StatsError::KeyMismatch(format!(
            "({}, {}) missing from new",
            k.0, k.1
        )));
    }
    if let Some(k) = sims_new.keys().find(|k| !sims_old.contains_key(*k)) {
        return Err(StatsError::KeyMismatch(format!(
            "({}, {}) missing from old",
            k.0, k.1
        )));
    }

    let shifts: Vec<PairShift> = sims_old
        .iter()
        .map(|((a, b), &old)| {
            let new = sims_new[&(a.clone(), b.clone())];
            PairShift {
                a: a.clone(),
                b: b.clone(),
                old,
                new,
                shift: new - old,
            }
        })
        .collect();
    let average = shifts.iter().map(|s| s.shift).sum::<f64>() / shifts.len() as f64;
    let mut max_increase = &shifts[0];
    let mut max_decrease = &shifts[0];
    for s in &shifts[1..] {
        if s.shift > max_increase.shift {
            max_increase = s;
        }
        if s.shift < max_decrease.shift {
            max_decrease = s;
        }
    }
    Ok(ShiftReport {
        word: word.to_string(),
        max_increase: max_increase.clone(),
        max_decrease: max_decrease.clone(),
        shifts,
        average,
    })
}

/// Cosine similarity of every unordered pair, keyed with the smaller id first.
pub fn pairwise_cosines<'a, I>(vectors: I) -> Result<BTreeMap<PairKey, f64>, StatsError>
where
    I: IntoIterator<Item = (&'a str, &'a [f64])>,
{
    let items: Vec<(&str, &[f64])> = vectors.into_iter().collect();
    let mut out = BTreeMap::new();
    for (i, (id_a, va)) in items.iter().enumerate() {
        for (id_b, vb) in &items[i + 1..] {
            let key = if id_a <= id_b {
                (id_a.to_string(), id_b.to_string())
            } else {
                (id_b.to_string(), id_a.to_string())
            };
            out.insert(key, cosine_similarity(va, vb)?);
        }
    }
    Ok(out)
}
