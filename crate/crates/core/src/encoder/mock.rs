//! Training-free deterministic encoder used as a test double.
//!
//! The vector at a position is a digest-seeded random direction for the token
//! itself plus distance-weighted directions for its neighbours within a small
//! window, normalized to the unit sphere. Upper layers weight the context more
//! heavily, so the same word in different contexts gets different vectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

pub(crate) fn mock_states(
    subtokens: &[String],
    window: usize,
    num_layers: usize,
    dim: usize,
) -> Vec<Vec<Vec<f64>>> {
    (0..num_layers)
        .map(|layer| {
            let context_weight = (layer + 1) as f64 / num_layers as f64;
            (0..subtokens.len())
                .map(|p| {
                    let mut v = direction(&subtokens[p], 0, layer, dim);
                    for o in 1..=window {
                        let w = context_weight / o as f64;
                        let neighbours = [
                            p.checked_sub(o).map(|q| (q, -(o as i64))),
                            Some(p + o)
                                .filter(|q| *q < subtokens.len())
                                .map(|q| (q, o as i64)),
                        ];
                        for (q, off) in neighbours.into_iter().flatten() {
                            let d = direction(&subtokens[q], off, layer, dim);
                            v.iter_mut().zip(&d).for_each(|(a, b)| *a += w * b);
                        }
                    }
                    normalize(v)
                })
                .collect()
        })
        .collect()
}

// Unit-length Gaussian direction seeded by (token, offset, layer).
fn direction(token: &str, offset: i64, layer: usize, dim: usize) -> Vec<f64> {
    let mut h = Sha256::new();
    h.update((token.len() as u64).to_le_bytes());
    h.update(token.as_bytes());
    h.update(offset.to_le_bytes());
    h.update((layer as u64).to_le_bytes());
    let seed: [u8; 32] = h.finalize().into();
    let rng = ChaCha8Rng::from_seed(seed);
    let v = rng.sample_iter(StandardNormal).take(dim).collect();
    normalize(v)
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}
