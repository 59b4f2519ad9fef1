//! End-to-end acceptance checks, one line per criterion.
//!
//! Runs without the libtest harness so that every verdict is printed even
//! when an earlier criterion fails. Set `HISTSEM_BLESS=1` to (re)write the
//! golden plot files.

mod common;

use common::{histsem_ok, p};
use histsem_core::corpus::{
    bucket_by_decade, preprocess_text, read_decade_corpus, read_pretraining_file, split_sentences,
    write_pretraining_corpus, CorpusManifest, DecadeLabel, DecadeRange, RawDocument, Sentence,
};
use histsem_core::encoder::{
    batch_extract, continue_pretraining, extract_usage_embedding, write_embeddings, Checkpoint,
    EmbeddingRecord, HiddenStates, TrainingCorpus,
};
use histsem_core::stats::{
    cluster_distances, embedding_shift, mantel_test, pairwise_cosines, pca_project, spearman,
    MantelOptions, PermutationMode, Tail,
};
use histsem_core::synth::{planted_shift, raw_documents, PlantedShift};
use histsem_core::usage::{MatrixSource, SimilarityMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

type Verdict = Result<String, String>;

fn main() {
    let criteria: [(&str, Duration, fn() -> Verdict); 8] = [
        ("preprocessing golden suite", secs(5), preprocessing),
        ("truncation statistics", secs(30), truncation),
        ("statistics oracles", secs(120), statistics_oracles),
        ("extraction invariants", secs(5), extraction),
        ("planted shift direction", secs(900), planted_direction),
        ("usage-pair judgment recovery", secs(120), dups_recovery),
        ("cluster shift and golden plot", secs(30), cluster_shift),
        ("determinism audit", secs(1200), determinism),
    ];
    let only: Option<usize> = std::env::var("HISTSEM_CRITERION")
        .ok()
        .and_then(|v| v.parse().ok());
    let mut failed = Vec::new();
    for (k, (name, budget, check)) in criteria.iter().enumerate() {
        let id = k + 1;
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let t = Instant::now();
        let verdict = std::panic::catch_unwind(check)
            .unwrap_or_else(|e| Err(format!("panicked: {}", panic_message(&e))));
        let took = t.elapsed();
        let verdict = match verdict {
            Ok(d) if took > *budget => Err(format!("{d}; took {took:.1?}, budget {budget:?}")),
            v => v,
        };
        match verdict {
            Ok(d) => println!("criterion {id} PASS {name}: {d} [{took:.1?}]"),
            Err(d) => {
                println!("criterion {id} FAIL {name}: {d} [{took:.1?}]");
                failed.push(id);
            }
        }
    }
    if !failed.is_empty() {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
    println!("acceptance: all criteria pass");
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn panic_message(e: &Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_default()
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- 1

const PREPROCESS_CASES: [(&str, &str); 50] = [
    ("do n't", "don't"),
    ("I do n't know", "i don't know"),
    ("HE DID N'T", "he didn't"),
    ("is n't it?", "isn't it ?"),
    ("John 's coach", "john's coach"),
    ("they 're here", "they're here"),
    ("we 've gone", "we've gone"),
    ("she 'll go", "she'll go"),
    ("he 'd say", "he'd say"),
    ("I 'm fine", "i'm fine"),
    ("Don't stop.", "don't stop ."),
    ("It\u{2019}s late", "it's late"),
    ("O\u{2019}Brien\u{2019}s coach", "o'brien's coach"),
    ("'s start", "'s start"),
    ("(\u{2019}s)", "( 's )"),
    ("dogs' tails", "dogs ' tails"),
    ("rock 'n' roll", "rock 'n ' roll"),
    ("The Coach", "the coach"),
    ("COACH", "coach"),
    ("ÀÉÎÕÜ", "aeiou"),
    ("café", "cafe"),
    ("Naïve Zoë", "naive zoe"),
    ("ÉCOLE", "ecole"),
    ("Ångström", "angstrom"),
    ("façade", "facade"),
    ("jalapeño", "jalapeno"),
    ("Crème Brûlée", "creme brulee"),
    ("São Paulo", "sao paulo"),
    ("Señor Núñez's", "senor nunez's"),
    ("Ωμέγα", "ωμεγα"),
    ("Ça va?", "ca va ?"),
    ("Mr. Smith", "mr. smith"),
    ("Mr.Smith", "mr . smith"),
    ("Dr. Who arrived.", "dr. who arrived ."),
    ("the U.S. army", "the u.s. army"),
    ("e.g. this", "e.g. this"),
    ("St. Louis at 9 a.m.", "st. louis at 9 a.m."),
    ("Hello, world!", "hello , world !"),
    ("stage-coach", "stage - coach"),
    ("(at noon)", "( at noon )"),
    ("wait...", "wait . . ."),
    ("\"Quote\"", "\" quote \""),
    ("a;b:c", "a ; b : c"),
    ("50% of $5", "50 % of $ 5"),
    ("3.14 and 1850s", "3 . 14 and 1850s"),
    ("  spaced \t out\n\nlines  ", "spaced out lines"),
    ("zero\u{200B}width\u{00A0}space", "zero width space"),
    ("bell\u{0007}char", "bell char"),
    ("", ""),
    ("   ", ""),
];

fn preprocessing() -> Verdict {
    let mut bad = Vec::new();
    for (raw, expected) in PREPROCESS_CASES {
        let once = preprocess_text(raw);
        if once != expected {
            bad.push(format!("{raw:?} -> {once:?}, expected {expected:?}"));
        } else if preprocess_text(&once) != once {
            bad.push(format!("{raw:?} is not idempotent"));
        }
    }
    check(bad.is_empty(), || bad.join("; "))?;

    // Lossless round trip through the pre-training files.
    let decades: Vec<DecadeLabel> = (1910..=2000).step_by(10).map(label).collect();
    let docs = raw_documents(7, 4, &decades);
    let range = DecadeRange::parse("1910:2000").unwrap();
    let (manifest, sentences) = prepare(&docs, range);
    let dir = tempfile::tempdir().unwrap();
    let report =
        write_pretraining_corpus(&manifest, &sentences, 0.0, 0, dir.path()).map_err(err)?;
    check(report.truncated.is_empty(), || {
        "fraction 0 truncated a sentence".into()
    })?;
    let back = read_decade_corpus(dir.path(), Some(&manifest)).map_err(err)?;
    let expected: Vec<Sentence> = manifest
        .decades
        .values()
        .flatten()
        .flat_map(|id| sentences[id].clone())
        .collect();
    check(back == expected, || {
        "sentences changed in the round trip".into()
    })?;
    for (decade, path) in &report.files {
        let read = read_pretraining_file(path).map_err(err)?;
        let want: Vec<Vec<Vec<String>>> = manifest.decades[decade]
            .iter()
            .map(|id| sentences[id].iter().map(|s| s.tokens.clone()).collect())
            .collect();
        check(read == want, || {
            format!("{} differs after reading", path.display())
        })?;
    }
    Ok(format!(
        "{} cases, {} sentences round-tripped",
        PREPROCESS_CASES.len(),
        back.len()
    ))
}

fn label(year: i32) -> DecadeLabel {
    DecadeLabel::new(year).unwrap()
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Normalizes, splits and buckets raw documents the way the CLI does.
fn prepare(
    docs: &[RawDocument],
    range: DecadeRange,
) -> (CorpusManifest, BTreeMap<String, Vec<Sentence>>) {
    let docs: Vec<RawDocument> = docs
        .iter()
        .map(|d| RawDocument {
            text: preprocess_text(&d.text),
            ..d.clone()
        })
        .filter(|d| !d.text.is_empty())
        .collect();
    let manifest = bucket_by_decade(&docs, range).unwrap();
    let sentences = docs
        .iter()
        .map(|d| (d.doc_id.clone(), split_sentences(d)))
        .collect();
    (manifest, sentences)
}

// ---------------------------------------------------------------- 2

fn truncation_fixture() -> (CorpusManifest, BTreeMap<String, Vec<Sentence>>) {
    const WORDS: [&str; 8] = ["the", "coach", "road", "team", "ran", "old", "new", "field"];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut docs = Vec::new();
    let mut sentences = BTreeMap::new();
    for d in 0..1000 {
        let decade = label(1910 + 10 * (d % 10) as i32);
        let id = format!("t{d:04}");
        let sents: Vec<Sentence> = (0..100)
            .map(|index| Sentence {
                doc_id: id.clone(),
                index,
                tokens: (0..rng.random_range(2..=12))
                    .map(|_| WORDS[rng.random_range(0..WORDS.len())].to_string())
                    .collect(),
                decade,
            })
            .collect();
        let text = sents
            .iter()
            .map(Sentence::text)
            .collect::<Vec<_>>()
            .join(" ");
        docs.push(RawDocument::new(id.clone(), decade.start_year(), text));
        sentences.insert(id, sents);
    }
    let manifest = bucket_by_decade(&docs, DecadeRange::parse("1910:2000").unwrap()).unwrap();
    (manifest, sentences)
}

fn truncation() -> Verdict {
    let (manifest, sentences) = truncation_fixture();
    let total: usize = sentences.values().map(Vec::len).sum();
    check(total == 100_000, || {
        format!("fixture has {total} sentences")
    })?;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = write_pretraining_corpus(&manifest, &sentences, 0.02, 42, a.path()).map_err(err)?;
    let rb = write_pretraining_corpus(&manifest, &sentences, 0.02, 42, b.path()).map_err(err)?;

    let n = total as f64;
    let sigma = (n * 0.02 * 0.98).sqrt();
    let count = ra.truncated.len();
    let dev = (count as f64 - 2000.0).abs();
    check(dev <= 3.0 * sigma, || {
        format!(
            "{count} truncated, {dev} from 2000 exceeds 3 sigma ({:.1})",
            3.0 * sigma
        )
    })?;
    check(ra.truncated == rb.truncated, || {
        "truncated sets differ".into()
    })?;
    for ((_, pa), (_, pb)) in ra.files.iter().zip(&rb.files) {
        check(fs::read(pa).unwrap() == fs::read(pb).unwrap(), || {
            format!("{} differs between runs", pa.display())
        })?;
    }

    // Every shortened sentence is a strict, non-empty prefix of the original.
    let back = read_decade_corpus(a.path(), Some(&manifest)).map_err(err)?;
    let mut seen = 0;
    for s in &back {
        let orig = &sentences[&s.doc_id][s.index].tokens;
        let cut = ra.truncated.contains(&(s.doc_id.clone(), s.index));
        let ok = if cut {
            seen += 1;
            !s.tokens.is_empty() && s.tokens.len() < orig.len() && orig.starts_with(&s.tokens)
        } else {
            &s.tokens == orig
        };
        check(ok, || format!("{}#{} written wrongly", s.doc_id, s.index))?;
    }
    check(seen == count, || {
        "truncation report disagrees with files".into()
    })?;
    Ok(format!(
        "{count} of {total} truncated (|{dev}| <= {:.1}), reruns byte-identical",
        3.0 * sigma
    ))
}

// ---------------------------------------------------------------- 3

/// Every permutation of `0..n`, in lexicographic order.
fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                go(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Rank of each value (1-based) by counting smaller values; tie-free input.
fn brute_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| 1.0 + v.iter().filter(|y| *y < x).count() as f64)
        .collect()
}

fn rank_difference_rho(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (brute_ranks(x), brute_ranks(y));
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
    let n = x.len() as f64;
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
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

fn matrix(rows: &[Vec<f64>], source: MatrixSource) -> SimilarityMatrix {
    let ids = (0..rows.len()).map(|i| format!("u{i}")).collect();
    SimilarityMatrix::from_dense("w", ids, rows, source)
}

fn upper(m: &[Vec<f64>], perm: &[usize]) -> Vec<f64> {
    let n = m.len();
    (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| m[perm[i]][perm[j]])
        .collect()
}

fn statistics_oracles() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    // Spearman over every ordering of tie-free values, lengths 3 to 8; shorter
    // inputs have no defined coefficient.
    check(spearman(&[1.0, 2.0], &[2.0, 1.0]).is_err(), || {
        "length-2 input was accepted".into()
    })?;
    let mut compared = 0usize;
    for n in 3..=8 {
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let base: Vec<f64> = (0..n)
            .map(|i| i as f64 * 1.5 + rng.random::<f64>())
            .collect();
        for perm in permutations(n) {
            let y: Vec<f64> = perm.iter().map(|&i| base[i]).collect();
            let got = spearman(&x, &y).map_err(err)?;
            let want = rank_difference_rho(&x, &y);
            check((got - want).abs() < 1e-12, || {
                format!("spearman {x:?} {y:?}: {got} vs {want}")
            })?;
            compared += 1;
        }
    }

    // Mantel p-values against an independent enumeration of all 5! relabelings.
    let perms5 = permutations(5);
    let identity: Vec<usize> = (0..5).collect();
    let mut worst = 0.0f64;
    for k in 0..12 {
        let a = random_symmetric(&mut rng, 5);
        let noise = random_symmetric(&mut rng, 5);
        let mix = k as f64 / 11.0;
        let b: Vec<Vec<f64>> = a
            .iter()
            .zip(&noise)
            .map(|(ra, rn)| {
                ra.iter()
                    .zip(rn)
                    .map(|(x, y)| (1.0 - mix) * x + mix * y)
                    .collect()
            })
            .collect();
        let xa = upper(&a, &identity);
        let rho = rank_difference_rho(&xa, &upper(&b, &identity));
        let extreme = perms5
            .iter()
            .filter(|p| rank_difference_rho(&xa, &upper(&b, p)) >= rho - 1e-12)
            .count();
        let exact = extreme as f64 / perms5.len() as f64;

        let (ma, mb) = (
            matrix(&a, MatrixSource::Human),
            matrix(&b, MatrixSource::Encoder("e".into())),
        );
        let run = |mode, permutations| {
            let opts = MantelOptions {
                permutations,
                seed: k,
                tail: Tail::Greater,
                mode,
            };
            mantel_test(&ma, &mb, &opts).map_err(err)
        };
        let ex = run(PermutationMode::Exhaustive, 0)?;
        check((ex.p_value - exact).abs() < 1e-12, || {
            format!("exhaustive p {} vs enumerated {exact}", ex.p_value)
        })?;
        let sampled = run(PermutationMode::Sampled, 9999)?;
        let diff = (sampled.p_value - exact).abs();
        worst = worst.max(diff);
        check(diff <= 0.02, || {
            format!("sampled p {} vs exact {exact}", sampled.p_value)
        })?;
    }

    // A matrix against itself.
    for k in 0..100 {
        let n = 3 + k % 8;
        let a = random_symmetric(&mut rng, n);
        let r = mantel_test(
            &matrix(&a, MatrixSource::Human),
            &matrix(&a, MatrixSource::Human),
            &MantelOptions {
                permutations: 19,
                seed: k as u64,
                tail: Tail::Greater,
                mode: PermutationMode::Sampled,
            },
        )
        .map_err(err)?;
        check((r.rho - 1.0).abs() < 1e-12, || {
            format!("mantel(A, A) rho = {}", r.rho)
        })?;
    }

    // PCA against a Jacobi eigendecomposition of the covariance matrix.
    let mut pca_worst = 0.0f64;
    for _ in 0..20 {
        let data: Vec<Vec<f64>> = (0..10)
            .map(|_| {
                (0..5)
                    .map(|j| rng.random::<f64>() * (5 - j) as f64)
                    .collect()
            })
            .collect();
        let (values, vectors, centered) = covariance_eigen(&data);
        for d in 1..=5 {
            let proj = pca_project(&data, d).map_err(err)?;
            for c in 0..d {
                pca_worst = pca_worst.max((proj.explained_variance[c] - values[c]).abs());
                for (row, coords) in centered.iter().zip(&proj.coordinates) {
                    let want: f64 = row.iter().zip(&vectors[c]).map(|(a, b)| a * b).sum();
                    pca_worst = pca_worst.max((coords[c] - want).abs());
                }
            }
        }
    }
    check(pca_worst < 1e-8, || {
        format!("PCA differs from oracle by {pca_worst:e}")
    })?;

    Ok(format!(
        "{compared} spearman orderings; sampled Mantel within {worst:.4} of exact; \
         100 self-correlations; PCA within {pca_worst:.1e}"
    ))
}

/// Eigenvalues (descending), unit eigenvectors with their largest-magnitude
/// entry made positive, and the centered rows.
#[allow(clippy::type_complexity)]
fn covariance_eigen(data: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let (n, dim) = (data.len(), data[0].len());
    let mean: Vec<f64> = (0..dim)
        .map(|j| data.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let centered: Vec<Vec<f64>> = data
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let mut a: Vec<Vec<f64>> = (0..dim)
        .map(|i| {
            (0..dim)
                .map(|j| centered.iter().map(|r| r[i] * r[j]).sum::<f64>() / (n - 1) as f64)
                .collect()
        })
        .collect();
    let mut v: Vec<Vec<f64>> = (0..dim)
        .map(|i| (0..dim).map(|j| f64::from(u8::from(i == j))).collect())
        .collect();
    for _sweep in 0..100 {
        let off: f64 = (0..dim)
            .flat_map(|i| (0..dim).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..dim {
            for q in p + 1..dim {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..dim {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..dim {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&x, &y| a[y][y].total_cmp(&a[x][x]));
    let values = order.iter().map(|&k| a[k][k]).collect();
    let vectors = order
        .iter()
        .map(|&k| {
            let col: Vec<f64> = (0..dim).map(|i| v[i][k]).collect();
            let big = col
                .iter()
                .copied()
                .reduce(|m, x| if x.abs() > m.abs() { x } else { m })
                .unwrap();
            col.iter().map(|x| x * big.signum()).collect()
        })
        .collect();
    (values, vectors, centered)
}

// ---------------------------------------------------------------- 4

fn extraction() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let spans = vec![0..1, 1..3, 3..6];
    let layers: Vec<Vec<Vec<f64>>> = (0..6)
        .map(|_| {
            (0..6)
                .map(|_| (0..4).map(|_| rng.random_range(-3.0..3.0)).collect())
                .collect()
        })
        .collect();
    let states = HiddenStates::new(layers.clone(), spans.clone()).map_err(err)?;
    for c in [2.0, 0.5, 8.0, -4.0, 0.25] {
        let scaled: Vec<Vec<Vec<f64>>> = layers
            .iter()
            .map(|l| {
                l.iter()
                    .map(|v| v.iter().map(|x| x * c).collect())
                    .collect()
            })
            .collect();
        let scaled = HiddenStates::new(scaled, spans.clone()).map_err(err)?;
        for word in 0..spans.len() {
            let base = extract_usage_embedding(&states, word, 4).map_err(err)?;
            let got = extract_usage_embedding(&scaled, word, 4).map_err(err)?;
            let want: Vec<f64> = base.iter().map(|x| x * c).collect();
            check(got == want, || {
                format!("scaling by {c} is not exact for word {word}")
            })?;
        }
    }

    let zeros = HiddenStates::new(vec![vec![vec![0.0; 4]; 6]; 6], spans).map_err(err)?;
    let z = extract_usage_embedding(&zeros, 2, 4).map_err(err)?;
    check(z.iter().all(|x| *x == 0.0), || {
        format!("zero layers gave {z:?}")
    })?;

    // Five layers; the focus word covers positions 1 and 2 with vectors
    // (l, 1) and (3l, -1) in layer l = 1..=4 (layer 0 is a decoy). Mean per
    // layer is (2l, 0): last four sum to (20, 0), last two to (14, 0).
    let fixture: Vec<Vec<Vec<f64>>> = (0..5)
        .map(|l| {
            let l = l as f64;
            if l == 0.0 {
                vec![vec![100.0, 100.0]; 3]
            } else {
                vec![vec![-9.0, 9.0], vec![l, 1.0], vec![3.0 * l, -1.0]]
            }
        })
        .collect();
    let fixture = HiddenStates::new(fixture, vec![0..1, 1..3]).map_err(err)?;
    let four = extract_usage_embedding(&fixture, 1, 4).map_err(err)?;
    let two = extract_usage_embedding(&fixture, 1, 2).map_err(err)?;
    check(four == vec![20.0, 0.0], || {
        format!("last-4 fixture gave {four:?}")
    })?;
    check(two == vec![14.0, 0.0], || {
        format!("last-2 fixture gave {two:?}")
    })?;
    Ok("exact scaling for 5 factors, zero input, 2-subtoken fixture".into())
}

// ---------------------------------------------------------------- 5

fn write_training_file(dir: &Path, corpus: &TrainingCorpus) -> PathBuf {
    let decade = corpus.decades[0];
    let text = corpus
        .documents
        .iter()
        .map(|doc| {
            doc.iter()
                .map(|s| format!("{}\n", s.join(" ")))
                .collect::<String>()
        })
        .collect::<Vec<_>>()
        .join("\n");
    let path = dir.join(format!("coha_{}s.txt", decade.start_year()));
    fs::write(&path, text).unwrap();
    path
}

fn mean_neutral_new(plant: &PlantedShift, sims: &BTreeMap<(String, String), f64>) -> f64 {
    let picked: Vec<f64> = sims
        .iter()
        .filter(|((a, b), _)| plant.is_neutral_new_pair(a, b))
        .map(|(_, v)| *v)
        .collect();
    picked.iter().sum::<f64>() / picked.len() as f64
}

fn planted_run(seed: u64) -> Result<(bool, bool, f64), String> {
    let plant = planted_shift(seed, 40, 3);
    let dir = tempfile::tempdir().unwrap();
    let old_dir = dir.path().join("old");
    let new_dir = dir.path().join("new");
    fs::create_dir_all(&old_dir).unwrap();
    fs::create_dir_all(&new_dir).unwrap();
    let old_file = write_training_file(&old_dir, &plant.old);
    let new_file = write_training_file(&new_dir, &plant.new);

    let base_cfg = PlantedShift::base_config(seed);
    let init = Checkpoint::init_toy(base_cfg.clone()).map_err(err)?;
    let base = continue_pretraining(&init, &[old_file], &base_cfg).map_err(err)?;
    let cont_cfg = PlantedShift::continuation_config(seed);
    let cont = continue_pretraining(&base, &[new_file], &cont_cfg).map_err(err)?;

    let usages = plant.usages();
    let sims = |ckpt: &Checkpoint| -> Result<BTreeMap<(String, String), f64>, String> {
        let records = batch_extract(ckpt, &usages, 4).map_err(err)?;
        pairwise_cosines(
            records
                .iter()
                .map(|r| (r.usage_id.as_str(), r.vector.as_slice())),
        )
        .map_err(err)
    };
    let (before, after) = (sims(&base)?, sims(&cont)?);
    let report = embedding_shift(&plant.word, &before, &after).map_err(err)?;
    let delta = mean_neutral_new(&plant, &after) - mean_neutral_new(&plant, &before);
    let planted = plant.is_planted_pair(&report.max_increase.a, &report.max_increase.b);
    Ok((delta > 0.0, planted, delta))
}

fn planted_direction() -> Verdict {
    let mut passes = 0;
    let mut notes = Vec::new();
    for seed in 0..10 {
        let (up, planted, delta) = planted_run(seed)?;
        if up && planted {
            passes += 1;
        } else {
            notes.push(format!(
                "seed {seed}: delta {delta:+.4}, planted max {planted}"
            ));
        }
    }
    let summary = format!("{passes}/10 seeded runs increase and peak on a planted pair");
    if passes >= 9 {
        Ok(summary)
    } else {
        Err(format!("{summary}; {}", notes.join("; ")))
    }
}

// ---------------------------------------------------------------- 6

fn dups_recovery() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (ckpt, dups, emb, report) = (
        d.join("mock.ckpt"),
        d.join("dups.csv"),
        d.join("dups.jsonl"),
        d.join("eval.json"),
    );
    histsem_ok(["init", "--kind", "mock", "--out", p(&ckpt)]);
    let mut rows = 0;
    let mut min_rho = f64::INFINITY;
    for seed in ["0", "1", "2"] {
        histsem_ok([
            "synth-dups",
            "--seed",
            seed,
            "--ckpt",
            p(&ckpt),
            "--out",
            p(&dups),
        ]);
        histsem_ok([
            "extract",
            "--dups",
            p(&dups),
            "--ckpt",
            p(&ckpt),
            "--out",
            p(&emb),
        ]);
        histsem_ok([
            "eval-dups",
            "--seed",
            seed,
            "--dups",
            p(&dups),
            "--emb",
            p(&emb),
            "--perms",
            "999",
            "--format",
            "json",
            "--out",
            p(&report),
        ]);
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&report).unwrap()).map_err(err)?;
        let results = json["results"].as_array().ok_or("no results array")?;
        check(results.len() == 4, || {
            format!("{} words reported", results.len())
        })?;
        let mut floor = f64::INFINITY;
        for r in results {
            let (word, rho, pv) = (
                r["word"].as_str().unwrap_or("?"),
                r["rho"].as_f64().unwrap_or(f64::NAN),
                r["p_value"].as_f64().unwrap_or(f64::NAN),
            );
            check(rho >= 0.9 && pv <= 0.05, || {
                format!("seed {seed}, word {word}: rho {rho}, p {pv}")
            })?;
            check(r["permutations"] == 999 && r["exhaustive"] == false, || {
                format!("seed {seed}, word {word}: not 999 sampled permutations")
            })?;
            floor = floor.min(pv);
            min_rho = min_rho.min(rho);
            rows += 1;
        }
        check(floor == 0.001, || {
            format!("seed {seed}: p floor {floor}, expected 0.001")
        })?;
    }
    Ok(format!(
        "{rows} word runs over 3 seeds, min rho {min_rho:.4}, p floor 0.001"
    ))
}

// ---------------------------------------------------------------- 7

fn cluster_fixture() -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let centers = [
        [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [6.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        [0.0, 6.0, 0.0, 0.0, 1.0, 0.0],
    ];
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (k, c) in centers.iter().enumerate() {
        for _ in 0..10 {
            points.push(
                c.iter()
                    .map(|x| x + noise.sample(&mut rng))
                    .collect::<Vec<f64>>(),
            );
            labels.push(format!("sense{k}"));
        }
    }
    let centroid = |k: &str| -> Vec<f64> {
        let members: Vec<&Vec<f64>> = points
            .iter()
            .zip(&labels)
            .filter(|(_, l)| *l == k)
            .map(|(p, _)| p)
            .collect();
        (0..6)
            .map(|j| members.iter().map(|m| m[j]).sum::<f64>() / members.len() as f64)
            .collect()
    };
    let moved = points
        .iter()
        .zip(&labels)
        .map(|(pt, l)| {
            let c = centroid(l);
            pt.iter().zip(&c).map(|(x, m)| x + 0.3 * (m - x)).collect()
        })
        .collect();
    (points, moved, labels)
}

fn store(path: &Path, vectors: &[Vec<f64>], encoder: &str) {
    let records: Vec<EmbeddingRecord> = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| EmbeddingRecord {
            word: "coach".into(),
            usage_id: format!("u{i:02}"),
            decade: label(1990),
            vector: v.clone(),
            encoder_id: encoder.into(),
        })
        .collect();
    write_embeddings(path, &records).unwrap();
}

fn cluster_shift() -> Verdict {
    let (before, after, labels) = cluster_fixture();
    let (b, a) = (
        cluster_distances(&before, &labels).map_err(err)?,
        cluster_distances(&after, &labels).map_err(err)?,
    );
    let mut problems = Vec::new();
    for (k, v) in &b.intra {
        if a.intra[k] >= *v {
            problems.push(format!("intra {k} {v:.4} -> {:.4}", a.intra[k]));
        }
    }
    for (k, v) in &b.inter {
        if a.inter[k] < *v {
            problems.push(format!("inter {}/{} {v:.4} -> {:.4}", k.0, k.1, a.inter[k]));
        }
    }

    // Golden plot of both stores.
    let dir = tempfile::tempdir().unwrap();
    let (old, new) = (dir.path().join("old.jsonl"), dir.path().join("new.jsonl"));
    store(&old, &before, "base");
    store(&new, &after, "retrained");
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let mut outputs = Vec::new();
    for run in 0..2 {
        let (csv, svg) = (
            dir.path().join(format!("pca{run}.csv")),
            dir.path().join(format!("pca{run}.svg")),
        );
        histsem_ok([
            "pca-plot",
            "--seed",
            "7",
            "--emb",
            p(&old),
            "--emb-new",
            p(&new),
            "--word",
            "coach",
            "--out-csv",
            p(&csv),
            "--out-svg",
            p(&svg),
        ]);
        outputs.push((fs::read(&csv).unwrap(), fs::read(&svg).unwrap()));
    }
    check(outputs[0] == outputs[1], || "pca-plot reruns differ".into())?;
    let (csv, svg) = &outputs[0];
    if std::env::var_os("HISTSEM_BLESS").is_some() {
        fs::write(golden.join("cluster_pca.csv"), csv).unwrap();
        fs::write(golden.join("cluster_pca.svg"), svg).unwrap();
    }
    let read = |name: &str| fs::read(golden.join(name)).map_err(|e| format!("{name}: {e}"));
    check(&read("cluster_pca.csv")? == csv, || {
        "CSV differs from golden".into()
    })?;
    check(&read("cluster_pca.svg")? == svg, || {
        "SVG differs from golden".into()
    })?;

    let summary = format!(
        "intra {} -> {}; inter {} -> {}; golden CSV/SVG identical",
        fmt_map(b.intra.values()),
        fmt_map(a.intra.values()),
        fmt_map(b.inter.values()),
        fmt_map(a.inter.values()),
    );
    if problems.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{}; {summary}", problems.join("; ")))
    }
}

fn fmt_map<'a>(values: impl Iterator<Item = &'a f64>) -> String {
    let v: Vec<String> = values.map(|x| format!("{x:.3}")).collect();
    format!("[{}]", v.join(", "))
}

// ---------------------------------------------------------------- 8

fn pipeline(out: &Path) {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic");
    let docs = data.join("docs");
    let bundled_dups = data.join("dups.csv");
    let f = |name: &str| out.join(name);
    histsem_ok([
        "preprocess",
        "--seed",
        "5",
        "--in",
        p(&docs),
        "--out",
        p(&f("corpus")),
        "--decades",
        "1910:2000",
        "--keyword",
        "coach",
    ]);
    histsem_ok([
        "init",
        "--seed",
        "5",
        "--kind",
        "toy",
        "--hidden-dim",
        "32",
        "--out",
        p(&f("base.ckpt")),
    ]);
    histsem_ok([
        "pretrain-toy",
        "--seed",
        "5",
        "--base",
        p(&f("base.ckpt")),
        "--corpus",
        p(&f("corpus")),
        "--decades",
        "1910:1950",
        "--steps",
        "50",
        "--out",
        p(&f("old.ckpt")),
    ]);
    histsem_ok([
        "pretrain-toy",
        "--seed",
        "5",
        "--base",
        p(&f("old.ckpt")),
        "--corpus",
        p(&f("corpus")),
        "--decades",
        "1960:2000",
        "--steps",
        "50",
        "--out",
        p(&f("new.ckpt")),
    ]);
    for which in ["old", "new"] {
        histsem_ok([
            "extract",
            "--word",
            "coach",
            "--corpus",
            p(&f("corpus")),
            "--ckpt",
            p(&f(&format!("{which}.ckpt"))),
            "--out",
            p(&f(&format!("{which}.jsonl"))),
        ]);
    }
    histsem_ok([
        "shift-report",
        "--old",
        p(&f("old.jsonl")),
        "--new",
        p(&f("new.jsonl")),
        "--out",
        p(&f("shift.json")),
    ]);
    histsem_ok([
        "shift-report",
        "--old",
        p(&f("old.jsonl")),
        "--new",
        p(&f("new.jsonl")),
        "--format",
        "tsv",
        "--out",
        p(&f("shift.tsv")),
    ]);
    histsem_ok([
        "pca-plot",
        "--emb",
        p(&f("old.jsonl")),
        "--emb-new",
        p(&f("new.jsonl")),
        "--word",
        "coach",
        "--out-csv",
        p(&f("pca.csv")),
        "--out-svg",
        p(&f("pca.svg")),
    ]);
    histsem_ok(["synth-corpus", "--seed", "5", "--out", p(&f("synth"))]);
    histsem_ok(["init", "--kind", "mock", "--out", p(&f("mock.ckpt"))]);
    histsem_ok([
        "synth-dups",
        "--seed",
        "5",
        "--ckpt",
        p(&f("mock.ckpt")),
        "--out",
        p(&f("dups.csv")),
    ]);
    histsem_ok([
        "extract",
        "--dups",
        p(&bundled_dups),
        "--ckpt",
        p(&f("mock.ckpt")),
        "--out",
        p(&f("dups.jsonl")),
    ]);
    for format in ["tsv", "json"] {
        histsem_ok([
            "eval-dups",
            "--seed",
            "5",
            "--dups",
            p(&bundled_dups),
            "--emb",
            p(&f("dups.jsonl")),
            "--format",
            format,
            "--out",
            p(&f(&format!("eval.{format}"))),
            "--matrices",
            p(&f("matrices")),
        ]);
    }
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Verdict {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    pipeline(a.path());
    pipeline(b.path());
    let (fa, fb) = (files_under(a.path()), files_under(b.path()));
    check(fa == fb, || "the two runs wrote different file sets".into())?;
    for required in [
        "corpus/manifest.json",
        "new.ckpt",
        "pca.csv",
        "pca.svg",
        "eval.tsv",
    ] {
        check(fa.iter().any(|f| f == Path::new(required)), || {
            format!("{required} was not written")
        })?;
    }
    let coha = fa
        .iter()
        .filter(|f| f.to_string_lossy().contains("coha_"))
        .count();
    check(coha > 0, || "no pre-training files written".into())?;
    let mut differing = Vec::new();
    for rel in &fa {
        if fs::read(a.path().join(rel)).unwrap() != fs::read(b.path().join(rel)).unwrap() {
            differing.push(rel.display().to_string());
        }
    }
    check(differing.is_empty(), || {
        format!("differ: {}", differing.join(", "))
    })?;
    Ok(format!(
        "{} files from 16 commands byte-identical across reruns",
        fa.len()
    ))
}
