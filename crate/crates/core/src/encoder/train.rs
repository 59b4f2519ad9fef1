use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeSet;
use std::path::PathBuf;

use super::checkpoint::{Checkpoint, EncoderKind, TrainingRun};
use super::config::EncoderConfig;
use super::toy::ToyParams;
use super::vocab::{Vocab, CLS, MASK, SEP};
use super::EncoderError;
use crate::corpus::{parse_decade_file_name, read_pretraining_file, DecadeLabel};
use crate::digest::FieldHasher;

// Instances per gradient chunk. Chunks are summed in a fixed order so the
// result does not depend on the thread count.
const CHUNK: usize = 4;

// Global gradient norm is clipped to this value before each update.
const MAX_GRAD_NORM: f64 = 1.0;

/// One packed, masked training sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingInstance {
    pub input_ids: Vec<u32>,
    /// 0 for `[CLS]` and the first segment, 1 for the second segment.
    pub segment_ids: Vec<u8>,
    pub masked_positions: Vec<usize>,
    /// Original ids at `masked_positions`.
    pub masked_labels: Vec<u32>,
    /// Next-sentence label; `None` when the instance has no second segment or
    /// the corpus offers no negatives.
    pub is_next: Option<bool>,
}

/// Documents read from pre-training files, in file order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingCorpus {
    /// `documents[d][s]` is the token list of sentence `s` of document `d`.
    pub documents: Vec<Vec<Vec<String>>>,
    pub decades: Vec<DecadeLabel>,
    pub digest: String,
}

impl TrainingCorpus {
    pub fn from_documents(documents: Vec<Vec<Vec<String>>>, decades: Vec<DecadeLabel>) -> Self {
        let mut h = FieldHasher::new();
        for doc in &documents {
            h.field(b"doc");
            for s in doc {
                h.field(s.join(" "));
            }
        }
        TrainingCorpus {
            documents,
            decades,
            digest: h.finish(),
        }
    }

    pub fn sentence_count(&self) -> usize {
        self.documents.iter().map(Vec::len).sum()
    }
}

/// Reads and concatenates pre-training files. Decades come from the
/// `coha_<year>s.txt` file names where present.
pub fn load_training_corpus(files: &[PathBuf]) -> Result<TrainingCorpus, EncoderError> {
    let mut documents = Vec::new();
    let mut decades = BTreeSet::new();
    for f in files {
        documents.extend(read_pretraining_file(f)?);
        if let Some(d) = f
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(parse_decade_file_name)
        {
            decades.insert(d);
        }
    }
    Ok(TrainingCorpus::from_documents(
        documents,
        decades.into_iter().collect(),
    ))
}

struct Encoded {
    docs: Vec<Vec<Vec<u32>>>,
    pairs: Vec<(usize, usize)>,
    sentences: Vec<(usize, usize)>,
}

impl Encoded {
    fn new(corpus: &TrainingCorpus, vocab: &Vocab) -> Self {
        let docs: Vec<Vec<Vec<u32>>> = corpus
            .documents
            .iter()
            .map(|d| {
                d.iter()
                    .map(|s| s.iter().flat_map(|w| vocab.wordpiece(w)).collect())
                    .collect()
            })
            .collect();
        let mut pairs = Vec::new();
        let mut sentences = Vec::new();
        for (d, doc) in docs.iter().enumerate() {
            for s in 0..doc.len() {
                sentences.push((d, s));
                if s + 1 < doc.len() {
                    pairs.push((d, s));
                }
            }
        }
        Encoded {
            docs,
            pairs,
            sentences,
        }
    }
}

/// Generates `count` instances from the random stream `(config.seed, stream)`.
///
/// Consecutive sentences of a document form positive pairs; half of them get
/// their second segment replaced by a sentence of another document. Each
/// non-special subtoken is selected for prediction with probability
/// `masked_lm_prob`, capped at `max_predictions_per_seq`; selected tokens
/// become `[MASK]` 80% of the time, a random token 10%, and stay as is 10%.
pub fn generate_instances(
    corpus: &TrainingCorpus,
    vocab: &Vocab,
    config: &EncoderConfig,
    count: usize,
    stream: u64,
) -> Vec<TrainingInstance> {
    instances(&Encoded::new(corpus, vocab), vocab, config, count, stream)
}

fn instances(
    enc: &Encoded,
    vocab: &Vocab,
    config: &EncoderConfig,
    count: usize,
    stream: u64,
) -> Vec<TrainingInstance> {
    if enc.sentences.is_empty() {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);
    let use_pairs = !enc.pairs.is_empty() && config.max_seq_length >= 5;
    let negatives = enc.docs.len() >= 2;
    (0..count)
        .map(|_| {
            let (a, b, is_next) = if use_pairs {
                let (d, s) = enc.pairs[rng.random_range(0..enc.pairs.len())];
                if negatives && rng.random_bool(0.5) {
                    let mut other = rng.random_range(0..enc.docs.len() - 1);
                    if other >= d {
                        other += 1;
                    }
                    let t = rng.random_range(0..enc.docs[other].len());
                    (&enc.docs[d][s], Some(&enc.docs[other][t]), Some(false))
                } else {
                    (
                        &enc.docs[d][s],
                        Some(&enc.docs[d][s + 1]),
                        negatives.then_some(true),
                    )
                }
            } else {
                let (d, s) = enc.sentences[rng.random_range(0..enc.sentences.len())];
                (&enc.docs[d][s], None, None)
            };
            let mut inst = pack(vocab, config.max_seq_length, a, b, is_next);
            mask(&mut inst, vocab, config, &mut rng);
            inst
        })
        .collect()
}

fn pack(
    vocab: &Vocab,
    max_len: usize,
    a: &[u32],
    b: Option<&Vec<u32>>,
    is_next: Option<bool>,
) -> TrainingInstance {
    let (cls, sep) = (vocab.special(CLS), vocab.special(SEP));
    let mut ids = vec![cls];
    let mut segs = vec![0u8];
    match b {
        Some(b) => {
            let budget = max_len - 3;
            let (mut la, mut lb) = (a.len(), b.len());
            while la + lb > budget {
                if lb >= la {
                    lb -= 1;
                } else {
                    la -= 1;
                }
            }
            ids.extend_from_slice(&a[..la]);
            ids.push(sep);
            segs.resize(ids.len(), 0);
            ids.extend_from_slice(&b[..lb]);
            ids.push(sep);
            segs.resize(ids.len(), 1);
        }
        None => {
            ids.extend_from_slice(&a[..a.len().min(max_len - 2)]);
            ids.push(sep);
            segs.resize(ids.len(), 0);
        }
    }
    TrainingInstance {
        input_ids: ids,
        segment_ids: segs,
        masked_positions: Vec::new(),
        masked_labels: Vec::new(),
        is_next: if b.is_some() { is_next } else { None },
    }
}

fn mask(inst: &mut TrainingInstance, vocab: &Vocab, config: &EncoderConfig, rng: &mut ChaCha8Rng) {
    let mut chosen: Vec<usize> = (0..inst.input_ids.len())
        .filter(|&i| !vocab.is_special(inst.input_ids[i]))
        .filter(|_| rng.random_bool(config.masked_lm_prob))
        .collect();
    if chosen.len() > config.max_predictions_per_seq {
        chosen.shuffle(rng);
        chosen.truncate(config.max_predictions_per_seq);
        chosen.sort_unstable();
    }
    let mask_id = vocab.special(MASK);
    for &p in &chosen {
        inst.masked_labels.push(inst.input_ids[p]);
        let r: f64 = rng.random();
        if r < 0.8 {
            inst.input_ids[p] = mask_id;
        } else if r < 0.9 {
            inst.input_ids[p] = loop {
                let id = rng.random_range(0..vocab.len() as u32);
                if !vocab.is_special(id) {
                    break id;
                }
            };
        }
    }
    inst.masked_positions = chosen;
}

/// Trains a toy checkpoint on `corpus` with masked-LM and next-sentence
/// prediction using plain gradient descent under linear warmup.
///
/// `num_train_steps == 0` returns `base` unchanged.
pub fn train_toy(
    base: &Checkpoint,
    corpus: &TrainingCorpus,
    config: &EncoderConfig,
) -> Result<Checkpoint, EncoderError> {
    config.validate()?;
    if config.num_train_steps == 0 {
        return Ok(base.clone());
    }
    if let EncoderKind::Mock { .. } = base.kind() {
        return Err(EncoderError::NotTrainable("mock"));
    }
    check_dimensions(base, config)?;
    if config.max_seq_length > base.config().max_seq_length {
        return Err(EncoderError::Config(format!(
            "max_seq_length {} exceeds the checkpoint's position table ({})",
            config.max_seq_length,
            base.config().max_seq_length
        )));
    }
    let enc = Encoded::new(corpus, base.vocab());
    if enc.sentences.is_empty() {
        return Err(EncoderError::EmptyInput);
    }

    let mut out = base.clone();
    let params = out
        .params
        .as_mut()
        .expect("toy checkpoints carry parameters");
    for step in 0..config.num_train_steps {
        let batch = instances(
            &enc,
            base.vocab(),
            config,
            config.train_batch_size,
            step as u64,
        );
        let masked: usize = batch.iter().map(|i| i.masked_positions.len()).sum();
        let nsp = batch.iter().filter(|i| i.is_next.is_some()).count();
        let mlm_scale = if masked > 0 { 1.0 / masked as f32 } else { 0.0 };
        let nsp_scale = if nsp > 0 { 1.0 / nsp as f32 } else { 0.0 };
        let current: &ToyParams = params;
        let parts: Vec<(ToyParams, f64, f64)> = batch
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut g = current.zeros_like();
                let (mut lm, mut ln) = (0.0, 0.0);
                for inst in chunk {
                    let (m, n) = current.accumulate_gradient(inst, &mut g, mlm_scale, nsp_scale);
                    lm += m;
                    ln += n;
                }
                (g, lm, ln)
            })
            .collect();
        let mut parts = parts.into_iter();
        let (mut grad, mut lm, mut ln) = parts.next().expect("batch is non-empty");
        for (g, m, n) in parts {
            grad.axpy(1.0, &g);
            lm += m;
            ln += n;
        }
        let norm = grad.norm();
        let clip = if norm > MAX_GRAD_NORM {
            MAX_GRAD_NORM / norm
        } else {
            1.0
        };
        params.axpy(-((config.learning_rate_at(step) * clip) as f32), &grad);
        if step % 50 == 0 || step + 1 == config.num_train_steps {
            log::debug!(
                "step {step}: mlm loss {:.4}, nsp loss {:.4}",
                lm / masked.max(1) as f64,
                ln / nsp.max(1) as f64
            );
        }
    }
    out.push_run(TrainingRun {
        corpus_digest: corpus.digest.clone(),
        decades: corpus.decades.clone(),
        steps: config.num_train_steps,
        seed: config.seed,
        learning_rate: config.learning_rate,
        warmup_steps: config.num_warmup_steps,
        batch_size: config.train_batch_size,
        note: None,
    });
    Ok(out)
}

fn check_dimensions(base: &Checkpoint, config: &EncoderConfig) -> Result<(), EncoderError> {
    if base.config().same_dimensions(config) {
        return Ok(());
    }
    Err(EncoderError::DimensionMismatch(format!(
        "checkpoint has {} layers x {} dims, config asks for {} x {}",
        base.config().num_layers,
        base.config().hidden_dim,
        config.num_layers,
        config.hidden_dim
    )))
}

/// Continues training `base` over the concatenation of `decade_files`.
///
/// With zero steps the parameters are left untouched and the lineage gets a
/// run entry saying so.
pub fn continue_pretraining(
    base: &Checkpoint,
    decade_files: &[PathBuf],
    config: &EncoderConfig,
) -> Result<Checkpoint, EncoderError> {
    if decade_files.is_empty() {
        return Err(EncoderError::NoCorpora);
    }
    config.validate()?;
    check_dimensions(base, config)?;
    let corpus = load_training_corpus(decade_files)?;
    if config.num_train_steps > 0 {
        return train_toy(base, &corpus, config);
    }
    let mut out = base.clone();
    out.push_run(TrainingRun {
        corpus_digest: corpus.digest.clone(),
        decades: corpus.decades.clone(),
        steps: 0,
        seed: config.seed,
        learning_rate: config.learning_rate,
        warmup_steps: config.num_warmup_steps,
        batch_size: config.train_batch_size,
        note: Some("zero steps requested; parameters unchanged".into()),
    });
    Ok(out)
}

/// Fraction of the sentence's subtokens recovered when each one is masked in
/// turn (single segment, no second sentence).
pub fn masked_accuracy(checkpoint: &Checkpoint, sentence: &[String]) -> Result<f64, EncoderError> {
    let Some(params) = checkpoint.params.as_ref() else {
        return Err(EncoderError::NotTrainable("mock"));
    };
    let vocab = checkpoint.vocab();
    let ids: Vec<u32> = sentence.iter().flat_map(|w| vocab.wordpiece(w)).collect();
    if ids.is_empty() {
        return Err(EncoderError::EmptyInput);
    }
    let inst = pack(vocab, checkpoint.config().max_seq_length, &ids, None, None);
    let h = params.hidden;
    let positions: Vec<usize> = (0..inst.input_ids.len())
        .filter(|&i| !vocab.is_special(inst.input_ids[i]))
        .collect();
    let correct = positions
        .iter()
        .filter(|&&p| {
            let mut input = inst.input_ids.clone();
            input[p] = vocab.special(MASK);
            let fwd = params.forward(&input, &inst.segment_ids);
            let top = fwd.states.last().expect("embedding layer present");
            let logits = params.mlm_logits(&top[p * h..(p + 1) * h]);
            let best = logits
                .iter()
                .enumerate()
                .fold(
                    (0, f32::NEG_INFINITY),
                    |acc, (i, &x)| if x > acc.1 { (i, x) } else { acc },
                )
                .0;
            best as u32 == inst.input_ids[p]
        })
        .count();
    Ok(correct as f64 / positions.len() as f64)
}
