use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use super::checkpoint::{Checkpoint, EncoderKind};
use super::{EncoderError, HiddenStates};
use crate::corpus::DecadeLabel;
use crate::usage::Usage;

pub const DEFAULT_LAST_K: usize = 4;

/// Focus-word vector for one usage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub word: String,
    pub usage_id: String,
    pub decade: DecadeLabel,
    pub vector: Vec<f64>,
    pub encoder_id: String,
}

/// Pools the focus word's subtoken vectors by mean in each of the top
/// `last_k` layers, then sums the pooled vectors.
pub fn extract_usage_embedding(
    states: &HiddenStates,
    focus_word_index: usize,
    last_k: usize,
) -> Result<Vec<f64>, EncoderError> {
    let layers = states.num_layers();
    if last_k == 0 || last_k > layers {
        return Err(EncoderError::InvalidLastK { last_k, layers });
    }
    let span = states.token_spans().get(focus_word_index).cloned().ok_or(
        EncoderError::FocusOutOfRange {
            index: focus_word_index,
            words: states.token_spans().len(),
        },
    )?;
    let width = span.len() as f64;
    let mut out = vec![0.0; states.hidden_dim()];
    for layer in &states.layers()[layers - last_k..] {
        let mut pooled = vec![0.0; out.len()];
        for v in &layer[span.clone()] {
            pooled.iter_mut().zip(v).for_each(|(p, x)| *p += x);
        }
        out.iter_mut()
            .zip(&pooled)
            .for_each(|(o, p)| *o += p / width);
    }
    Ok(out)
}

/// Encodes every usage and extracts its focus vector, preserving order.
///
/// When the focus word would fall past the encoder's subtoken budget, the
/// sentence is re-windowed so the focus sits roughly in the middle.
pub fn batch_extract(
    checkpoint: &Checkpoint,
    usages: &[Usage],
    last_k: usize,
) -> Result<Vec<EmbeddingRecord>, EncoderError> {
    let budget = match checkpoint.kind() {
        EncoderKind::Mock { .. } => checkpoint.config().max_seq_length,
        EncoderKind::Toy => checkpoint.config().max_seq_length - 2,
    };
    let encoder_id = checkpoint.digest();
    records_from(usages, &encoder_id, last_k, |u| {
        let lens: Vec<usize> = checkpoint.pieces(&u.tokens).iter().map(Vec::len).collect();
        let start = window_start(&lens, u.focus_index, budget);
        let states = checkpoint.encode(&u.tokens[start..])?;
        Ok((states, u.focus_index - start))
    })
}

/// First word of the encoding window for `focus`.
fn window_start(lens: &[usize], focus: usize, budget: usize) -> usize {
    if focus >= lens.len() || lens[..=focus].iter().sum::<usize>() <= budget {
        return 0;
    }
    let mut start = focus;
    let mut used = lens[focus];
    while start > 0 && used + lens[start - 1] <= budget / 2 {
        start -= 1;
        used += lens[start];
    }
    start
}

/// Shared driver: checks id uniqueness, then obtains states per usage in
/// parallel and extracts focus vectors.
pub(crate) fn records_from<F>(
    usages: &[Usage],
    encoder_id: &str,
    last_k: usize,
    states_for: F,
) -> Result<Vec<EmbeddingRecord>, EncoderError>
where
    F: Fn(&Usage) -> Result<(HiddenStates, usize), EncoderError> + Sync,
{
    let mut seen = HashSet::new();
    for u in usages {
        if !seen.insert(u.usage_id.as_str()) {
            return Err(EncoderError::DuplicateUsage(u.usage_id.clone()));
        }
    }
    usages
        .par_iter()
        .map(|u| {
            let wrap = |e: EncoderError| EncoderError::Usage {
                usage_id: u.usage_id.clone(),
                source: Box::new(e),
            };
            let (states, focus) = states_for(u).map_err(wrap)?;
            let vector = extract_usage_embedding(&states, focus, last_k).map_err(wrap)?;
            if vector.iter().any(|x| !x.is_finite()) {
                return Err(wrap(EncoderError::Malformed("non-finite embedding".into())));
            }
            Ok(EmbeddingRecord {
                word: u.word.clone(),
                usage_id: u.usage_id.clone(),
                decade: u.decade,
                vector,
                encoder_id: encoder_id.to_string(),
            })
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct StoredRecord {
    word: String,
    usage_id: String,
    decade: DecadeLabel,
    encoder_id: String,
    dim: usize,
    vector: Vec<f64>,
}

/// Serializes records as JSON Lines.
pub fn embeddings_to_jsonl(records: &[EmbeddingRecord]) -> String {
    embeddings_to_jsonl_with(records, None)
}

/// Like [`embeddings_to_jsonl`], led by a `{"provenance": ...}` line when
/// `provenance` is given. [`read_embeddings`] skips that line.
pub fn embeddings_to_jsonl_with(
    records: &[EmbeddingRecord],
    provenance: Option<&serde_json::Value>,
) -> String {
    let mut out = String::new();
    if let Some(p) = provenance {
        let line = serde_json::json!({ "provenance": p });
        let _ = writeln!(out, "{line}");
    }
    for r in records {
        let stored = StoredRecord {
            word: r.word.clone(),
            usage_id: r.usage_id.clone(),
            decade: r.decade,
            encoder_id: r.encoder_id.clone(),
            dim: r.vector.len(),
            vector: r.vector.clone(),
        };
        let line = serde_json::to_string(&stored).expect("finite records serialize");
        let _ = writeln!(out, "{line}");
    }
    out
}

pub fn write_embeddings(path: &Path, records: &[EmbeddingRecord]) -> Result<(), EncoderError> {
    std::fs::write(path, embeddings_to_jsonl(records)).map_err(|e| EncoderError::io(path, e))
}

pub fn read_embeddings(path: &Path) -> Result<Vec<EmbeddingRecord>, EncoderError> {
    let text = std::fs::read_to_string(path).map_err(|e| EncoderError::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: String| EncoderError::Format(format!("{}:{}: {m}", path.display(), n + 1));
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        if value.get("provenance").is_some() && value.get("usage_id").is_none() {
            continue;
        }
        let r: StoredRecord = serde_json::from_value(value).map_err(|e| bad(e.to_string()))?;
        if r.dim != r.vector.len() {
            return Err(bad(format!("dim {} but {} values", r.dim, r.vector.len())));
        }
        if r.vector.iter().any(|x| !x.is_finite()) {
            return Err(bad("non-finite value".into()));
        }
        out.push(EmbeddingRecord {
            word: r.word,
            usage_id: r.usage_id,
            decade: r.decade,
            vector: r.vector,
            encoder_id: r.encoder_id,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn states(layers: Vec<Vec<Vec<f64>>>, spans: Vec<std::ops::Range<usize>>) -> HiddenStates {
        HiddenStates::new(layers, spans).unwrap()
    }

    fn basis(i: usize, dim: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        v
    }

    #[test]
    fn zero_layers_give_zero_vector() {
        let s = states(vec![vec![vec![0.0; 5]; 3]; 4], vec![0..1, 1..3]);
        assert_eq!(extract_usage_embedding(&s, 1, 4).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn single_subtoken_sum() {
        let layers = [0, 1, 0, 1].iter().map(|&i| vec![basis(i, 4)]).collect();
        let s = states(layers, vec![0..1]);
        assert_eq!(
            extract_usage_embedding(&s, 0, 4).unwrap(),
            vec![2.0, 2.0, 0.0, 0.0]
        );
    }

    #[test]
    fn two_subtoken_mean_then_sum() {
        // word 1 covers positions 1 and 2
        let layers: Vec<Vec<Vec<f64>>> = (0..4)
            .map(|l| {
                let l = l as f64;
                vec![vec![9.0, 9.0], vec![l, 1.0], vec![3.0 * l, -1.0]]
            })
            .collect();
        let s = states(layers, vec![0..1, 1..3]);
        // per layer mean = (2l, 0); sum over l = 0..3 is (12, 0)
        assert_eq!(extract_usage_embedding(&s, 1, 4).unwrap(), vec![12.0, 0.0]);
        // last 2 layers: 2*2 + 2*3 = 10
        assert_eq!(extract_usage_embedding(&s, 1, 2).unwrap(), vec![10.0, 0.0]);
    }

    #[test]
    fn argument_errors() {
        let s = states(vec![vec![vec![1.0]]; 2], vec![0..1]);
        assert!(matches!(
            extract_usage_embedding(&s, 0, 0),
            Err(EncoderError::InvalidLastK { .. })
        ));
        assert!(matches!(
            extract_usage_embedding(&s, 0, 3),
            Err(EncoderError::InvalidLastK { .. })
        ));
        assert!(matches!(
            extract_usage_embedding(&s, 1, 1),
            Err(EncoderError::FocusOutOfRange { index: 1, words: 1 })
        ));
    }

    fn usage(id: &str, text: &str, focus: usize) -> Usage {
        Usage {
            usage_id: id.into(),
            word: "coach".into(),
            tokens: text.split(' ').map(String::from).collect(),
            focus_index: focus,
            decade: DecadeLabel::new(1920).unwrap(),
        }
    }

    #[test]
    fn batch_preserves_order_and_rejects_duplicates() {
        let c = Checkpoint::init_mock(
            EncoderConfig {
                hidden_dim: 8,
                ..EncoderConfig::toy()
            },
            2,
        )
        .unwrap();
        assert!(batch_extract(&c, &[], 4).unwrap().is_empty());
        let us = vec![
            usage("b", "the coach left", 1),
            usage("a", "a coach came", 1),
        ];
        let recs = batch_extract(&c, &us, 4).unwrap();
        assert_eq!(
            recs.iter().map(|r| r.usage_id.as_str()).collect::<Vec<_>>(),
            ["b", "a"]
        );
        assert!(recs
            .iter()
            .all(|r| r.encoder_id == c.digest() && r.vector.len() == 8));
        let dup = vec![usage("a", "the coach", 1), usage("a", "x coach", 1)];
        assert!(matches!(
            batch_extract(&c, &dup, 4),
            Err(EncoderError::DuplicateUsage(_))
        ));
        let bad = vec![usage("z", "the coach", 5)];
        assert!(
            matches!(batch_extract(&c, &bad, 4), Err(EncoderError::Usage { usage_id, .. }) if usage_id == "z")
        );
    }

    #[test]
    fn rewindows_late_focus() {
        let cfg = EncoderConfig {
            hidden_dim: 8,
            max_seq_length: 10,
            max_predictions_per_seq: 2,
            ..EncoderConfig::toy()
        };
        let c = Checkpoint::init_toy(cfg).unwrap();
        let text = format!("{} coach left", vec!["the"; 30].join(" "));
        let recs = batch_extract(&c, &[usage("u", &text, 30)], 4).unwrap();
        let tail = batch_extract(&c, &[usage("u", "the the the coach left", 3)], 4).unwrap();
        assert_eq!(recs[0].vector, tail[0].vector);
        assert_eq!(window_start(&[1; 31], 30, 8), 27);
        assert_eq!(window_start(&[1; 31], 3, 8), 0);
    }

    #[test]
    fn store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.jsonl");
        let recs = vec![EmbeddingRecord {
            word: "coach".into(),
            usage_id: "d:0:1".into(),
            decade: DecadeLabel::new(1950).unwrap(),
            vector: vec![0.1, -2.5e-7, 1.0 / 3.0],
            encoder_id: "abc".into(),
        }];
        write_embeddings(&path, &recs).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(
            r#"{"word":"coach","usage_id":"d:0:1","decade":1950,"encoder_id":"abc","dim":3,"#
        ));
        assert_eq!(read_embeddings(&path).unwrap(), recs);
        let prov = serde_json::json!({"seed": 7});
        let with = embeddings_to_jsonl_with(&recs, Some(&prov));
        assert!(with.starts_with("{\"provenance\":{\"seed\":7}}\n"));
        std::fs::write(&path, with).unwrap();
        assert_eq!(read_embeddings(&path).unwrap(), recs);
        std::fs::write(
            &path,
            r#"{"word":"w","usage_id":"u","decade":1950,"encoder_id":"e","dim":2,"vector":[1.0]}"#,
        )
        .unwrap();
        assert!(matches!(
            read_embeddings(&path),
            Err(EncoderError::Format(_))
        ));
    }

    proptest! {
        #[test]
        fn extraction_is_linear(
            values in proptest::collection::vec(-10.0f64..10.0, 5 * 3 * 4),
            c in -4.0f64..4.0,
        ) {
            let layers: Vec<Vec<Vec<f64>>> = values
                .chunks(12)
                .map(|l| l.chunks(4).map(<[f64]>::to_vec).collect())
                .collect();
            let s = states(layers, vec![0..2, 2..3]);
            let base = extract_usage_embedding(&s, 0, 4).unwrap();
            let scaled = extract_usage_embedding(&s.scaled(c), 0, 4).unwrap();
            for (a, b) in base.iter().zip(&scaled) {
                prop_assert!((a * c - b).abs() <= 1e-9 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn all_layers_equals_direct_sum(values in proptest::collection::vec(-5.0f64..5.0, 3 * 2 * 3)) {
            let layers: Vec<Vec<Vec<f64>>> = values
                .chunks(6)
                .map(|l| l.chunks(3).map(<[f64]>::to_vec).collect())
                .collect();
            let s = states(layers.clone(), vec![0..2]);
            let got = extract_usage_embedding(&s, 0, 3).unwrap();
            for k in 0..3 {
                let direct: f64 = layers.iter().map(|l| (l[0][k] + l[1][k]) / 2.0).sum();
                assert_abs_diff_eq!(got[k], direct, epsilon = 1e-12);
            }
        }
    }
}
