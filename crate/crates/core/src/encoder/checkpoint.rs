use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use super::config::EncoderConfig;
use super::mock::mock_states;
use super::toy::ToyParams;
use super::vocab::{Vocab, CLS, SEP};
use super::{EncoderError, HiddenStates};
use crate::corpus::DecadeLabel;
use crate::digest::FieldHasher;

const MAGIC: &[u8; 8] = b"HSEMCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum EncoderKind {
    /// Training-free digest encoder mixing `window` neighbours on each side.
    Mock {
        window: usize,
    },
    Toy,
}

/// One continued-training run in a checkpoint's lineage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRun {
    pub corpus_digest: String,
    pub decades: Vec<DecadeLabel>,
    pub steps: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub warmup_steps: usize,
    pub batch_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Encoder weights with their configuration and training lineage.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    kind: EncoderKind,
    config: EncoderConfig,
    vocab: Vocab,
    pub(crate) params: Option<ToyParams>,
    provenance: Vec<TrainingRun>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: EncoderKind,
    config: EncoderConfig,
    vocab: Vec<String>,
    provenance: Vec<TrainingRun>,
    digest: String,
    blocks: Vec<BlockHeader>,
}

#[derive(Serialize, Deserialize)]
struct BlockHeader {
    name: String,
    shape: Vec<usize>,
}

impl Checkpoint {
    /// Fresh toy encoder initialized from `config.seed`.
    pub fn init_toy(config: EncoderConfig) -> Result<Self, EncoderError> {
        Self::init_toy_with_vocab(config, Vocab::shipped())
    }

    pub fn init_toy_with_vocab(config: EncoderConfig, vocab: Vocab) -> Result<Self, EncoderError> {
        config.validate()?;
        let params = ToyParams::init(
            vocab.len(),
            config.hidden_dim,
            config.max_seq_length,
            config.num_layers,
            config.seed,
        );
        Ok(Checkpoint {
            kind: EncoderKind::Toy,
            config,
            vocab,
            params: Some(params),
            provenance: Vec::new(),
        })
    }

    pub fn init_mock(config: EncoderConfig, window: usize) -> Result<Self, EncoderError> {
        config.validate()?;
        Ok(Checkpoint {
            kind: EncoderKind::Mock { window },
            config,
            vocab: Vocab::shipped(),
            params: None,
            provenance: Vec::new(),
        })
    }

    pub fn kind(&self) -> EncoderKind {
        self.kind
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn provenance(&self) -> &[TrainingRun] {
        &self.provenance
    }

    pub fn num_layers(&self) -> usize {
        self.config.num_layers
    }

    pub fn hidden_dim(&self) -> usize {
        self.config.hidden_dim
    }

    pub(crate) fn push_run(&mut self, run: TrainingRun) {
        self.provenance.push(run);
    }

    /// Digest over kind, config, vocabulary and parameters. Lineage notes are
    /// not included, so two checkpoints that encode identically share a digest.
    pub fn digest(&self) -> String {
        let mut h = FieldHasher::new();
        h.field(MAGIC);
        h.field(serde_json::to_vec(&self.kind).expect("kind serializes"));
        h.field(serde_json::to_vec(&self.config).expect("config serializes"));
        for t in self.vocab.tokens() {
            h.field(t);
        }
        if let Some(p) = &self.params {
            for block in p.blocks() {
                h.field(f32_bytes(block));
            }
        }
        h.finish()
    }

    /// Subword ids per word.
    pub(crate) fn pieces(&self, tokens: &[String]) -> Vec<Vec<u32>> {
        tokens.iter().map(|t| self.vocab.wordpiece(t)).collect()
    }

    pub fn encode(&self, tokens: &[String]) -> Result<HiddenStates, EncoderError> {
        if tokens.is_empty() {
            return Err(EncoderError::EmptyInput);
        }
        let pieces = self.pieces(tokens);
        let (offset, budget) = match self.kind {
            EncoderKind::Mock { .. } => (0, self.config.max_seq_length),
            EncoderKind::Toy => (1, self.config.max_seq_length - 2),
        };
        let mut ids = Vec::new();
        let mut spans = Vec::new();
        for word in &pieces {
            let room = budget - ids.len();
            if room == 0 {
                break;
            }
            let take = word.len().min(room);
            let start = offset + ids.len();
            spans.push(start..start + take);
            ids.extend_from_slice(&word[..take]);
        }
        let layers = match self.kind {
            EncoderKind::Mock { window } => {
                let subtokens: Vec<String> = ids
                    .iter()
                    .map(|&id| self.vocab.token(id).to_string())
                    .collect();
                mock_states(
                    &subtokens,
                    window,
                    self.config.num_layers,
                    self.config.hidden_dim,
                )
            }
            EncoderKind::Toy => {
                let params = self
                    .params
                    .as_ref()
                    .expect("toy checkpoints carry parameters");
                let mut seq = Vec::with_capacity(ids.len() + 2);
                seq.push(self.vocab.special(CLS));
                seq.extend_from_slice(&ids);
                seq.push(self.vocab.special(SEP));
                let fwd = params.forward(&seq, &vec![0; seq.len()]);
                let h = params.hidden;
                fwd.states[1..]
                    .iter()
                    .map(|s| {
                        s.chunks(h)
                            .map(|v| v.iter().map(|&x| x as f64).collect())
                            .collect()
                    })
                    .collect()
            }
        };
        HiddenStates::new(layers, spans)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let blocks = self
            .params
            .as_ref()
            .map(|p| {
                p.block_specs()
                    .into_iter()
                    .map(|(name, shape)| BlockHeader { name, shape })
                    .collect()
            })
            .unwrap_or_default();
        let header = Header {
            kind: self.kind,
            config: self.config.clone(),
            vocab: self.vocab.tokens().to_vec(),
            provenance: self.provenance.clone(),
            digest: self.digest(),
            blocks,
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        if let Some(p) = &self.params {
            for block in p.blocks() {
                out.extend_from_slice(&f32_bytes(block));
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EncoderError> {
        let bad = |m: &str| EncoderError::Format(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(EncoderError::Format(format!(
                "unsupported version {version}"
            )));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = &bytes[20..];
        if body.len() < header_len {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&body[..header_len])
            .map_err(|e| EncoderError::Format(format!("header: {e}")))?;
        header.config.validate()?;
        let vocab = Vocab::from_tokens(header.vocab)?;
        let mut data = &body[header_len..];
        let params = match header.kind {
            EncoderKind::Mock { .. } => {
                if !header.blocks.is_empty() || !data.is_empty() {
                    return Err(bad("mock checkpoint carries parameters"));
                }
                None
            }
            EncoderKind::Toy => {
                let mut p = ToyParams::zeros(
                    vocab.len(),
                    header.config.hidden_dim,
                    header.config.max_seq_length,
                    header.config.num_layers,
                );
                let specs = p.block_specs();
                if specs.len() != header.blocks.len()
                    || specs
                        .iter()
                        .zip(&header.blocks)
                        .any(|((n, s), b)| *n != b.name || *s != b.shape)
                {
                    return Err(bad("parameter blocks do not match the config"));
                }
                for block in p.blocks_mut() {
                    let n = block.len() * 4;
                    if data.len() < n {
                        return Err(bad("truncated parameter data"));
                    }
                    for (x, c) in block.iter_mut().zip(data[..n].chunks_exact(4)) {
                        *x = f32::from_le_bytes(c.try_into().expect("4 bytes"));
                    }
                    data = &data[n..];
                }
                if !data.is_empty() {
                    return Err(bad("trailing bytes after parameters"));
                }
                Some(p)
            }
        };
        let ckpt = Checkpoint {
            kind: header.kind,
            config: header.config,
            vocab,
            params,
            provenance: header.provenance,
        };
        if ckpt.digest() != header.digest {
            return Err(bad("digest mismatch"));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<(), EncoderError> {
        let mut f = std::fs::File::create(path).map_err(|e| EncoderError::io(path, e))?;
        f.write_all(&self.to_bytes())
            .map_err(|e| EncoderError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, EncoderError> {
        let bytes = std::fs::read(path).map_err(|e| EncoderError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn f32_bytes(v: &[f32]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}
