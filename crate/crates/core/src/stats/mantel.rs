use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{spearman, StatsError};
use crate::usage::SimilarityMatrix;

/// Largest dimension for which all `n!` relabelings are enumerated.
pub const EXHAUSTIVE_MAX_DIM: usize = 8;
const AUTO_EXHAUSTIVE_DIM: usize = 6;
// Permuted statistics within this distance of the observed one count as ties.
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tail {
    /// Count permuted rho >= observed rho.
    Greater,
    /// Count |permuted rho| >= |observed rho|.
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PermutationMode {
    /// Exhaustive for dimension <= 6, sampled otherwise.
    Auto,
    Sampled,
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MantelOptions {
    pub permutations: usize,
    pub seed: u64,
    pub tail: Tail,
    pub mode: PermutationMode,
}

impl Default for MantelOptions {
    fn default() -> Self {
        MantelOptions {
            permutations: 999,
            seed: 0,
            tail: Tail::Greater,
            mode: PermutationMode::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MantelResult {
    pub rho: f64,
    pub p_value: f64,
    /// Relabelings evaluated (`n!` in exhaustive mode).
    pub permutations: usize,
    pub observed_cells: usize,
    pub exhaustive: bool,
}

/// Mantel test of rank correlation between two aligned similarity matrices.
///
/// The statistic is Spearman's rho over the defined upper-triangle cells.
/// Under the null, `b` is relabeled by a random simultaneous row-and-column
/// permutation (its missing-cell mask moves with it) and rho is recomputed
/// over the cells defined in both. Sampled mode reports
/// `(1 + #extreme) / (1 + permutations)`; exhaustive mode enumerates every
/// relabeling, identity included, and reports `#extreme / n!`.
///
/// Permutation `k` is drawn from a ChaCha stream keyed by `(seed, k)`, so the
/// result does not depend on how the work is scheduled across threads.
pub fn mantel_test(
    a: &SimilarityMatrix,
    b: &SimilarityMatrix,
    opts: &MantelOptions,
) -> Result<MantelResult, StatsError> {
    if !a.is_aligned_with(b) {
        return Err(StatsError::Misaligned(format!(
            "`{}` and `{}` differ in usage ids or missing cells",
            a.word(),
            b.word()
        )));
    }
    let n = a.dim();
    if n < 3 {
        return Err(StatsError::TooFew { needed: 3, got: n });
    }
    let cells = a.defined_upper_cells();
    if cells.len() < 3 {
        return Err(StatsError::TooFew {
            needed: 3,
            got: cells.len(),
        });
    }

    let x: Vec<f64> = cells.iter().map(|&(i, j)| a.get(i, j).unwrap()).collect();
    let y: Vec<f64> = cells.iter().map(|&(i, j)| b.get(i, j).unwrap()).collect();
    let rho = spearman(&x, &y)?;

    let exhaustive = match opts.mode {
        PermutationMode::Auto => n <= AUTO_EXHAUSTIVE_DIM,
        PermutationMode::Sampled => false,
        PermutationMode::Exhaustive => {
            if n > EXHAUSTIVE_MAX_DIM {
                return Err(StatsError::InvalidArgument(format!(
                    "exhaustive Mantel limited to dimension {EXHAUSTIVE_MAX_DIM}, got {n}"
                )));
            }
            true
        }
    };
    if !exhaustive && opts.permutations == 0 {
        return Err(StatsError::InvalidArgument(
            "permutations must be positive".into(),
        ));
    }

    let is_extreme = |perm: &[usize]| -> bool {
        match permuted_rho(a, b, &cells, perm) {
            Some(r) => match opts.tail {
                Tail::Greater => r >= rho - TIE_EPS,
                Tail::TwoSided => r.abs() >= rho.abs() - TIE_EPS,
            },
            None => false,
        }
    };

    let (count, total) = if exhaustive {
        let perms: Vec<Vec<usize>> = (0..n).permutations(n).collect();
        let count = perms.par_iter().filter(|p| is_extreme(p)).count();
        (count, perms.len())
    } else {
        let count = (0..opts.permutations)
            .into_par_iter()
            .filter(|&k| is_extreme(&sample_permutation(n, opts.seed, k as u64)))
            .count();
        (count, opts.permutations)
    };

    let p_value = if exhaustive {
        count as f64 / total as f64
    } else {
        (1 + count) as f64 / (1 + total) as f64
    };
    Ok(MantelResult {
        rho,
        p_value,
        permutations: total,
        observed_cells: cells.len(),
        exhaustive,
    })
}

fn sample_permutation(n: usize, seed: u64, index: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    perm
}

// rho between a and b relabeled by `perm`, over cells defined in both;
// None when fewer than 3 cells survive or either side is constant.
fn permuted_rho(
    a: &SimilarityMatrix,
    b: &SimilarityMatrix,
    cells: &[(usize, usize)],
    perm: &[usize],
) -> Option<f64> {
    let (mut x, mut y) = (
        Vec::with_capacity(cells.len()),
        Vec::with_capacity(cells.len()),
    );
    for &(i, j) in cells {
        if let Some(v) = b.get(perm[i], perm[j]) {
            x.push(a.get(i, j).unwrap());
            y.push(v);
        }
    }
    spearman(&x, &y).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::usage::MatrixSource;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("u{i}")).collect()
    }

    fn random_sym(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        let mut m = vec![vec![1.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let v: f64 = rng.random();
                m[i][j] = v;
                m[j][i] = v;
            }
        }
        m
    }

    fn mat(rows: &[Vec<f64>]) -> SimilarityMatrix {
        SimilarityMatrix::from_dense("w", ids(rows.len()), rows, MatrixSource::Human)
    }

    #[test]
    fn identical_matrices_give_rho_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = mat(&random_sym(4, &mut rng));
        let r = mantel_test(&a, &a, &MantelOptions::default()).unwrap();
        assert_abs_diff_eq!(r.rho, 1.0, epsilon = 1e-12);
        assert!(r.exhaustive);
        assert_eq!(r.permutations, 24);
        assert_eq!(r.observed_cells, 6);
    }

    #[test]
    fn exhaustive_matches_hand_enumeration() {
        let a = mat(&[
            vec![1.0, 0.9, 0.1, 0.4],
            vec![0.9, 1.0, 0.3, 0.2],
            vec![0.1, 0.3, 1.0, 0.8],
            vec![0.4, 0.2, 0.8, 1.0],
        ]);
        let b = mat(&[
            vec![1.0, 0.7, 0.2, 0.5],
            vec![0.7, 1.0, 0.1, 0.3],
            vec![0.2, 0.1, 1.0, 0.9],
            vec![0.5, 0.3, 0.9, 1.0],
        ]);
        // oracle: enumerate the 24 relabelings directly with nested loops
        let cells = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
        let xa: Vec<f64> = cells.iter().map(|&(i, j)| a.get(i, j).unwrap()).collect();
        let obs = spearman(
            &xa,
            &cells
                .iter()
                .map(|&(i, j)| b.get(i, j).unwrap())
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let mut count = 0;
        let mut total = 0;
        for p0 in 0..4 {
            for p1 in 0..4 {
                for p2 in 0..4 {
                    for p3 in 0..4 {
                        let p = [p0, p1, p2, p3];
                        let mut s = p;
                        s.sort();
                        if s != [0, 1, 2, 3] {
                            continue;
                        }
                        total += 1;
                        let yb: Vec<f64> = cells
                            .iter()
                            .map(|&(i, j)| b.get(p[i], p[j]).unwrap())
                            .collect();
                        if spearman(&xa, &yb).unwrap() >= obs - 1e-12 {
                            count += 1;
                        }
                    }
                }
            }
        }
        assert_eq!(total, 24);
        let opts = MantelOptions {
            mode: PermutationMode::Exhaustive,
            ..Default::default()
        };
        let r = mantel_test(&a, &b, &opts).unwrap();
        assert_abs_diff_eq!(r.rho, obs, epsilon = 1e-15);
        assert_eq!(r.p_value, count as f64 / 24.0);
    }

    #[test]
    fn p_floor_with_999_permutations() {
        // 12 usages, b is a strictly monotone function of a: nothing beats identity
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_sym(12, &mut rng);
        let b: Vec<Vec<f64>> = a
            .iter()
            .map(|r| r.iter().map(|v| v * v + 2.0).collect())
            .collect();
        let opts = MantelOptions {
            permutations: 999,
            seed: 1,
            ..Default::default()
        };
        let r = mantel_test(&mat(&a), &mat(&b), &opts).unwrap();
        assert_abs_diff_eq!(r.rho, 1.0, epsilon = 1e-12);
        assert_eq!(r.p_value, 0.001);
        assert!(!r.exhaustive);
    }

    #[test]
    fn deterministic_and_p_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = mat(&random_sym(9, &mut rng));
        let b = mat(&random_sym(9, &mut rng));
        let opts = MantelOptions {
            permutations: 199,
            seed: 4,
            ..Default::default()
        };
        let r1 = mantel_test(&a, &b, &opts).unwrap();
        let r2 = mantel_test(&a, &b, &opts).unwrap();
        assert_eq!(r1, r2);
        assert!(r1.p_value >= 1.0 / 200.0 && r1.p_value <= 1.0);
    }

    #[test]
    fn two_sided_catches_negative_association() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_sym(10, &mut rng);
        let b: Vec<Vec<f64>> = a.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
        let greater = mantel_test(
            &mat(&a),
            &mat(&b),
            &MantelOptions {
                seed: 2,
                ..Default::default()
            },
        )
        .unwrap();
        let two = mantel_test(
            &mat(&a),
            &mat(&b),
            &MantelOptions {
                seed: 2,
                tail: Tail::TwoSided,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(greater.p_value > 0.9);
        assert_eq!(two.p_value, 0.001);
    }

    #[test]
    fn sparse_mask_moves_with_relabeling() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let dense = random_sym(8, &mut rng);
        let mut a = SimilarityMatrix::empty("w", ids(8), MatrixSource::Human);
        let mut b = SimilarityMatrix::empty("w", ids(8), MatrixSource::Human);
        for i in 0..8 {
            for j in i + 1..8 {
                if (i + j) % 3 != 0 {
                    a.set(i, j, Some(dense[i][j]));
                    b.set(i, j, Some(dense[i][j] * 2.0));
                }
            }
        }
        let r = mantel_test(
            &a,
            &b,
            &MantelOptions {
                seed: 9,
                ..Default::default()
            },
        )
        .unwrap();
        assert_abs_diff_eq!(r.rho, 1.0, epsilon = 1e-12);
        assert!(r.p_value <= 0.01);
    }

    #[test]
    fn errors() {
        let two = mat(&[vec![1.0, 0.5], vec![0.5, 1.0]]);
        assert!(matches!(
            mantel_test(&two, &two, &MantelOptions::default()),
            Err(StatsError::TooFew { .. })
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = mat(&random_sym(4, &mut rng));
        let other = SimilarityMatrix::from_dense(
            "w",
            vec!["x".into(), "u1".into(), "u2".into(), "u3".into()],
            &random_sym(4, &mut rng),
            MatrixSource::Human,
        );
        assert!(matches!(
            mantel_test(&a, &other, &MantelOptions::default()),
            Err(StatsError::Misaligned(_))
        ));
        let constant = mat(&vec![vec![0.5; 4]; 4]);
        assert_eq!(
            mantel_test(&a, &constant, &MantelOptions::default()),
            Err(StatsError::Constant)
        );
        let big = mat(&random_sym(9, &mut rng));
        let opts = MantelOptions {
            mode: PermutationMode::Exhaustive,
            ..Default::default()
        };
        assert!(matches!(
            mantel_test(&big, &big, &opts),
            Err(StatsError::InvalidArgument(_))
        ));
    }

    #[test]
    fn relabeling_both_leaves_rho_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let a = random_sym(7, &mut rng);
        let b = random_sym(7, &mut rng);
        let perm = [3usize, 0, 6, 1, 5, 2, 4];
        let relabel = |m: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            (0..7)
                .map(|i| (0..7).map(|j| m[perm[i]][perm[j]]).collect())
                .collect()
        };
        let opts = MantelOptions {
            permutations: 99,
            mode: PermutationMode::Sampled,
            ..Default::default()
        };
        let r1 = mantel_test(&mat(&a), &mat(&b), &opts).unwrap();
        let r2 = mantel_test(&mat(&relabel(&a)), &mat(&relabel(&b)), &opts).unwrap();
        assert_abs_diff_eq!(r1.rho, r2.rho, epsilon = 1e-12);
    }
}
