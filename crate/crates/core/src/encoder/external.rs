//! Adapter for hidden states computed outside this crate.
//!
//! Requests are JSON Lines of `{"usage_id", "tokens", "focus_index"}`.
//! Responses are JSON Lines of `{"usage_id", "layers"}` where `layers[l][p]`
//! is the vector at position `p` of layer `l`, bottom layer first. Positions
//! map one-to-one onto input words unless the response also carries
//! `token_spans`, a list of `[start, end)` subtoken ranges per word.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Command, Stdio};

use super::extract::{records_from, EmbeddingRecord};
use super::{EncoderError, HiddenStates};
use crate::digest::FieldHasher;
use crate::usage::Usage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalRequest {
    pub usage_id: String,
    pub tokens: Vec<String>,
    pub focus_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalResponse {
    pub usage_id: String,
    pub layers: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_spans: Option<Vec<[usize; 2]>>,
}

impl ExternalResponse {
    pub fn into_states(self) -> Result<HiddenStates, EncoderError> {
        let seq = self.layers.first().map_or(0, Vec::len);
        let spans = match self.token_spans {
            Some(s) => s.into_iter().map(|[a, b]| a..b).collect(),
            None => (0..seq).map(|p| p..p + 1).collect(),
        };
        HiddenStates::new(self.layers, spans)
    }
}

pub fn requests_jsonl(usages: &[Usage]) -> String {
    let mut out = String::new();
    for u in usages {
        let req = ExternalRequest {
            usage_id: u.usage_id.clone(),
            tokens: u.tokens.clone(),
            focus_index: u.focus_index,
        };
        out.push_str(&serde_json::to_string(&req).expect("request serializes"));
        out.push('\n');
    }
    out
}

pub fn write_requests(path: &Path, usages: &[Usage]) -> Result<(), EncoderError> {
    std::fs::write(path, requests_jsonl(usages)).map_err(|e| EncoderError::io(path, e))
}

/// Parses response lines into states keyed by usage id.
pub fn parse_responses(
    reader: impl BufRead,
) -> Result<BTreeMap<String, HiddenStates>, EncoderError> {
    let mut out = BTreeMap::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| EncoderError::External(format!("read: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let resp: ExternalResponse = serde_json::from_str(&line)
            .map_err(|e| EncoderError::External(format!("line {}: {e}", n + 1)))?;
        let id = resp.usage_id.clone();
        let states = resp.into_states().map_err(|e| EncoderError::Usage {
            usage_id: id.clone(),
            source: Box::new(e),
        })?;
        if out.insert(id.clone(), states).is_some() {
            return Err(EncoderError::DuplicateUsage(id));
        }
    }
    Ok(out)
}

pub fn read_responses(path: &Path) -> Result<BTreeMap<String, HiddenStates>, EncoderError> {
    let f = std::fs::File::open(path).map_err(|e| EncoderError::io(path, e))?;
    parse_responses(BufReader::new(f))
}

/// Runs `program args...`, feeding requests on stdin and reading responses
/// from stdout.
pub fn run_subprocess(
    program: &str,
    args: &[String],
    usages: &[Usage],
) -> Result<BTreeMap<String, HiddenStates>, EncoderError> {
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .map_err(|e| EncoderError::External(format!("spawn `{program}`: {e}")))?;
    let input = requests_jsonl(usages);
    let mut stdin = child.stdin.take().expect("stdin piped");
    let writer = std::thread::spawn(move || stdin.write_all(input.as_bytes()));
    let stdout = child.stdout.take().expect("stdout piped");
    let parsed = parse_responses(BufReader::new(stdout));
    let status = child
        .wait()
        .map_err(|e| EncoderError::External(format!("wait `{program}`: {e}")))?;
    writer
        .join()
        .expect("writer thread does not panic")
        .map_err(|e| EncoderError::External(format!("write requests: {e}")))?;
    if !status.success() {
        return Err(EncoderError::External(format!(
            "`{program}` exited with {status}"
        )));
    }
    parsed
}

/// Identifier for externally computed states: a digest of every usage's
/// states in id order.
pub fn external_encoder_id(states: &BTreeMap<String, HiddenStates>) -> String {
    let mut h = FieldHasher::new();
    h.field(b"external");
    for (id, s) in states {
        h.field(id);
        for layer in s.layers() {
            for v in layer {
                for x in v {
                    h.field(x.to_le_bytes());
                }
            }
        }
        for span in s.token_spans() {
            h.field((span.start as u64).to_le_bytes())
                .field((span.end as u64).to_le_bytes());
        }
    }
    format!("external-{}", h.finish())
}

/// Focus vectors for `usages` from externally supplied states.
pub fn records_from_states(
    states: &BTreeMap<String, HiddenStates>,
    usages: &[Usage],
    last_k: usize,
) -> Result<Vec<EmbeddingRecord>, EncoderError> {
    let id = external_encoder_id(states);
    records_from(usages, &id, last_k, |u| {
        let s = states
            .get(&u.usage_id)
            .ok_or_else(|| EncoderError::External("no states returned".into()))?;
        Ok((s.clone(), u.focus_index))
    })
}
