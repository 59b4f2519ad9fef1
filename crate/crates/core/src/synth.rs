//! Seeded synthetic data: raw documents for pipeline runs, a corpus pair with
//! a planted sense shift, a small "coach" usage fixture and DUPS-style
//! judgment files whose scores track an encoder's similarities.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::BTreeSet;

use crate::corpus::{DecadeLabel, RawDocument, Sentence};
use crate::encoder::{
    batch_extract, Checkpoint, EncoderConfig, EncoderError, TrainingCorpus, DEFAULT_LAST_K,
};
use crate::stats::cosine_similarity;
use crate::usage::{usage_from_snippet, Usage};

pub const CARRIAGE_TOPIC: &[&str] = &[
    "horses",
    "driver",
    "passengers",
    "inn",
    "road",
    "mail",
    "wheels",
    "dust",
    "miles",
    "village",
    "journey",
    "tavern",
    "carriage",
    "stage",
];

pub const SPORT_TOPIC: &[&str] = &[
    "team",
    "players",
    "game",
    "season",
    "league",
    "football",
    "practice",
    "win",
    "match",
    "goals",
    "basketball",
    "training",
    "sports",
    "baseball",
];

const FUNCTION_WORDS: &[&str] = &[
    "the", "a", "and", "of", "with", "to", "in", "at", "on", "his",
];

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A sentence of topic and function words, optionally with `focus` at a
/// random position. Returns the tokens and the focus index.
fn topic_sentence(
    rng: &mut ChaCha8Rng,
    topic: &[&str],
    focus: Option<&str>,
) -> (Vec<String>, Option<usize>) {
    let len = rng.random_range(6..=9);
    let mut tokens: Vec<String> = (0..len)
        .map(|i| {
            let pool = if i % 2 == 0 { FUNCTION_WORDS } else { topic };
            pool.choose(rng).expect("non-empty pool").to_string()
        })
        .collect();
    let index = focus.map(|w| {
        let at = rng.random_range(0..=tokens.len());
        tokens.insert(at, w.to_string());
        at
    });
    tokens.push(".".to_string());
    (tokens, index)
}

/// Two pre-training corpora for one focus word: in `old` the word only
/// appears with carriage-topic words, in `new` only with sport-topic words.
/// Each corpus also holds focus-free sentences of the other topic, so both
/// topics are known to a model trained on either one.
#[derive(Debug, Clone)]
pub struct PlantedShift {
    pub word: String,
    pub old: TrainingCorpus,
    pub new: TrainingCorpus,
    /// Held-out usages in carriage contexts (old sense).
    pub old_usages: Vec<Usage>,
    /// Held-out usages in sport contexts (new sense).
    pub new_usages: Vec<Usage>,
    /// Held-out usages among function words only. Their vectors reflect what
    /// the encoder assumes about the word itself.
    pub neutral_usages: Vec<Usage>,
}

impl PlantedShift {
    pub fn usages(&self) -> Vec<Usage> {
        self.old_usages
            .iter()
            .chain(&self.new_usages)
            .chain(&self.neutral_usages)
            .cloned()
            .collect()
    }

    fn is_new(&self, id: &str) -> bool {
        self.new_usages.iter().any(|u| u.usage_id == id)
    }

    fn is_neutral(&self, id: &str) -> bool {
        self.neutral_usages.iter().any(|u| u.usage_id == id)
    }

    /// A pair joining a new-sense usage with a usage outside the new sense.
    pub fn is_planted_pair(&self, a: &str, b: &str) -> bool {
        self.is_new(a) != self.is_new(b)
    }

    /// A pair of one neutral and one new-sense usage.
    pub fn is_neutral_new_pair(&self, a: &str, b: &str) -> bool {
        (self.is_new(a) && self.is_neutral(b)) || (self.is_neutral(a) && self.is_new(b))
    }

    /// Training setup for the base model on `old`.
    pub fn base_config(seed: u64) -> EncoderConfig {
        EncoderConfig {
            seed,
            hidden_dim: 32,
            train_batch_size: 16,
            learning_rate: 1.0,
            num_warmup_steps: 20,
            num_train_steps: 1000,
            ..EncoderConfig::toy()
        }
    }

    /// Continued pre-training on `new`: same shape, gentler steps.
    pub fn continuation_config(seed: u64) -> EncoderConfig {
        EncoderConfig {
            learning_rate: 0.2,
            num_train_steps: 500,
            ..Self::base_config(seed)
        }
    }
}

const PROBE_FOCUS: usize = 3;

pub fn planted_shift(seed: u64, docs: usize, probes_per_sense: usize) -> PlantedShift {
    let word = "coach";
    let build = |stream: u64, with_word: &[&str], without: &[&str], decade: i32| {
        let mut rng = rng_for(seed, stream);
        let documents = (0..docs)
            .map(|_| {
                (0..4)
                    .map(|s| {
                        if s % 2 == 0 {
                            topic_sentence(&mut rng, with_word, Some(word)).0
                        } else {
                            topic_sentence(&mut rng, without, None).0
                        }
                    })
                    .collect()
            })
            .collect();
        TrainingCorpus::from_documents(documents, vec![DecadeLabel::containing(decade)])
    };
    // Probes put the word at a fixed position among eight context words.
    let probes = |stream: u64, topic: &[&str], decade: i32, tag: &str| {
        let mut rng = rng_for(seed, stream);
        (0..probes_per_sense)
            .map(|i| {
                let mut tokens: Vec<String> = (0..8)
                    .map(|_| topic.choose(&mut rng).expect("non-empty").to_string())
                    .collect();
                tokens.insert(PROBE_FOCUS, word.to_string());
                tokens.push(".".to_string());
                Usage {
                    usage_id: format!("{tag}{i}"),
                    word: word.to_string(),
                    tokens,
                    focus_index: PROBE_FOCUS,
                    decade: DecadeLabel::containing(decade),
                }
            })
            .collect()
    };
    PlantedShift {
        word: word.to_string(),
        old: build(1, CARRIAGE_TOPIC, SPORT_TOPIC, 1910),
        new: build(2, SPORT_TOPIC, CARRIAGE_TOPIC, 1990),
        old_usages: probes(3, CARRIAGE_TOPIC, 1910, "old"),
        new_usages: probes(4, SPORT_TOPIC, 1990, "new"),
        neutral_usages: probes(5, FUNCTION_WORDS, 1990, "neutral"),
    }
}

const OPENERS: &[&str] = &[
    "Mr. Hale said the",
    "Dr. Moreau didn't think the",
    "At the café the",
    "They're sure the",
    "Señor Núñez's",
    "On St. Mark's road the",
    "The",
    "Then the",
    "We'll see if the",
];

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Raw documents spread over `decades`, written with the surface noise a
/// scanned corpus has: capitals, accents, contractions and abbreviations.
///
/// "coach" keeps carriage company in the first half of the decades and sport
/// company in the second half. One extra document is dated a decade before
/// the first one and one is empty, so range filtering and empty-document
/// handling get exercised.
pub fn raw_documents(
    seed: u64,
    docs_per_decade: usize,
    decades: &[DecadeLabel],
) -> Vec<RawDocument> {
    let mut rng = rng_for(seed, 10);
    let mut docs = Vec::new();
    for (k, decade) in decades.iter().enumerate() {
        let topic = if 2 * k < decades.len() {
            CARRIAGE_TOPIC
        } else {
            SPORT_TOPIC
        };
        for i in 0..docs_per_decade {
            let year = decade.start_year() + rng.random_range(0..10);
            let sentences = rng.random_range(3..=6);
            let text: Vec<String> = (0..sentences)
                .map(|_| {
                    let focus = rng.random_bool(0.6).then_some("coach");
                    let (tokens, _) = topic_sentence(&mut rng, topic, focus);
                    let opener = OPENERS.choose(&mut rng).expect("non-empty");
                    let body = tokens[..tokens.len() - 1].join(" ");
                    let end = if rng.random_bool(0.1) { "!" } else { "." };
                    format!("{} {body}{end}", capitalize(opener))
                })
                .collect();
            docs.push(RawDocument::new(
                format!("{}-{i:03}", decade.start_year()),
                year,
                text.join(" "),
            ));
        }
    }
    if let Some(first) = decades.first() {
        let year = first.start_year() - 5;
        docs.push(RawDocument::new(
            format!("{}-early", first.start_year()),
            year,
            "The Coach left before the road was built.",
        ));
        docs.push(RawDocument::new(
            format!("{}-empty", first.start_year()),
            first.start_year(),
            "  \n",
        ));
    }
    docs
}

const COACH_FIXTURE: &[(i32, &str)] = &[
    (1830, "the stage coach left the inn at dawn ."),
    (1840, "the coach and four horses waited by the road ."),
    (
        1850,
        "she rode in the mail coach to the village , and the coach was late .",
    ),
    (1860, "cinderella 's coach turned back into a pumpkin ."),
    (1870, "the coach driver whipped the horses ."),
    (
        1880,
        "a coach and a wagon met on the bridge , and the coach stopped .",
    ),
    (1900, "the railway coach was full of passengers ."),
    (1920, "the express coach to the city left at noon ."),
    (
        1950,
        "the coach told the team to run , the coach shouted , and the coach left .",
    ),
    (1970, "our football coach won the league ."),
    (1990, "the coach of the basketball team resigned ."),
    (
        2000,
        "he hired a coach to help with his training , and the coach was strict .",
    ),
];

/// Twelve sentences holding seventeen occurrences of "coach"; some sentences
/// use the word two or three times.
pub fn coach_fixture() -> Vec<Sentence> {
    COACH_FIXTURE
        .iter()
        .enumerate()
        .map(|(i, (year, text))| Sentence {
            doc_id: "fixture".into(),
            index: i,
            tokens: text.split(' ').map(String::from).collect(),
            decade: DecadeLabel::containing(*year),
        })
        .collect()
}

/// A DUPS-style CSV for `words` with every usage pair annotated.
///
/// Each word gets `usages_per_word` synthetic snippets. The five scores of a
/// pair are `1 + 3t` plus Gaussian noise of `noise_sd`, rounded and clamped
/// to 1..=4, where `t` is the pair's cosine under `encoder` rescaled to
/// [0, 1] over the word's pairs.
pub fn synthetic_dups(
    encoder: &Checkpoint,
    seed: u64,
    words: &[&str],
    usages_per_word: usize,
    noise_sd: f64,
) -> Result<String, EncoderError> {
    let noise = Normal::new(0.0, noise_sd)
        .map_err(|e| EncoderError::Config(format!("noise_sd {noise_sd}: {e}")))?;
    let mut out = csv::Writer::from_writer(Vec::new());
    let header = [
        "word",
        "usage_a_text",
        "usage_a_focus_offset",
        "usage_a_interval",
        "usage_b_text",
        "usage_b_focus_offset",
        "usage_b_interval",
        "score_1",
        "score_2",
        "score_3",
        "score_4",
        "score_5",
    ];
    out.write_record(header).expect("in-memory write");
    for (k, word) in words.iter().enumerate() {
        let mut rng = rng_for(seed, 100 + k as u64);
        let mut seen = BTreeSet::new();
        let mut snippets = Vec::new();
        while snippets.len() < usages_per_word {
            let topic = if rng.random_bool(0.5) {
                CARRIAGE_TOPIC
            } else {
                SPORT_TOPIC
            };
            let (tokens, at) = topic_sentence(&mut rng, topic, Some(word));
            let at = at.expect("focus inserted");
            let text = tokens.join(" ");
            if !seen.insert(text.clone()) {
                continue;
            }
            let offset = tokens[..at]
                .iter()
                .map(|t| t.chars().count() + 1)
                .sum::<usize>();
            let interval = if rng.random_bool(0.5) {
                "1910-1920"
            } else {
                "1990-2000"
            };
            snippets.push((text, offset, interval));
        }
        let usages = snippets
            .iter()
            .map(|(text, offset, interval)| {
                usage_from_snippet(word, text, *offset, interval).map_err(EncoderError::Config)
            })
            .collect::<Result<Vec<Usage>, _>>()?;
        let vectors = batch_extract(encoder, &usages, DEFAULT_LAST_K)?;
        let mut cells = Vec::new();
        for i in 0..usages.len() {
            for j in i + 1..usages.len() {
                let c = cosine_similarity(&vectors[i].vector, &vectors[j].vector)
                    .map_err(|e| EncoderError::Config(format!("cosine: {e}")))?;
                cells.push((i, j, c));
            }
        }
        let lo = cells.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
        let hi = cells.iter().map(|c| c.2).fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        for (i, j, c) in cells {
            let t = (c - lo) / span;
            let (a, b) = (&snippets[i], &snippets[j]);
            let mut record = vec![
                word.to_string(),
                a.0.clone(),
                a.1.to_string(),
                a.2.to_string(),
                b.0.clone(),
                b.1.to_string(),
                b.2.to_string(),
            ];
            for _ in 0..5 {
                let score = (1.0 + 3.0 * t + noise.sample(&mut rng))
                    .round()
                    .clamp(1.0, 4.0);
                record.push(format!("{score}"));
            }
            out.write_record(&record).expect("in-memory write");
        }
    }
    let bytes = out.into_inner().expect("in-memory flush");
    Ok(String::from_utf8(bytes).expect("utf-8 input"))
}
