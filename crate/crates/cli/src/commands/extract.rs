use clap::Args;
use histsem_core::corpus::{preprocess_text, read_decade_corpus};
use histsem_core::encoder::external::{read_responses, records_from_states, run_subprocess};
use histsem_core::encoder::{batch_extract, embeddings_to_jsonl_with, Checkpoint, DEFAULT_LAST_K};
use histsem_core::usage::{find_usages, load_dups, Usage};
use serde::Serialize;
use std::path::PathBuf;

use super::preprocess::read_manifest;
use crate::error::{CliError, CliResult};
use crate::provenance::Provenance;
use crate::{require_dir, require_file, write_file, GlobalArgs};

#[derive(Args, Debug)]
pub struct ExtractArgs {
    /// Focus word to look up in `--corpus`.
    #[arg(long, requires = "corpus", conflicts_with = "dups")]
    pub word: Option<String>,
    /// Directory of `coha_<decade>s.txt` files.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Embed every usage of a usage-pair judgment file instead.
    #[arg(long)]
    pub dups: Option<PathBuf>,
    /// Encoder checkpoint (toy or mock).
    #[arg(long, conflicts_with_all = ["external_cmd", "external_states"])]
    pub ckpt: Option<PathBuf>,
    /// Program that reads request JSON Lines on stdin and writes hidden
    /// states on stdout; split on whitespace into program and arguments.
    #[arg(long, conflicts_with = "external_states")]
    pub external_cmd: Option<String>,
    /// Precomputed hidden-state responses (JSON Lines).
    #[arg(long)]
    pub external_states: Option<PathBuf>,
    /// Number of top layers summed.
    #[arg(long, default_value_t = DEFAULT_LAST_K)]
    pub last_k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct Settings<'a> {
    word: Option<&'a str>,
    last_k: usize,
    encoder: &'a str,
}

pub fn run(g: &GlobalArgs, a: &ExtractArgs) -> CliResult<()> {
    if a.ckpt.is_none() && a.external_cmd.is_none() && a.external_states.is_none() {
        return Err(CliError::invalid(
            "an encoder is required: --ckpt, --external-cmd or --external-states",
        ));
    }
    let usages: Vec<Usage> = match (&a.word, &a.corpus, &a.dups) {
        (Some(word), Some(corpus), None) => {
            require_dir(corpus, "corpus")?;
            let word = preprocess_text(word);
            if word.is_empty() || word.contains(' ') {
                return Err(CliError::invalid(format!(
                    "--word `{word}` is not a single token"
                )));
            }
            let manifest = read_manifest(corpus)?;
            let sentences = read_decade_corpus(corpus, manifest.as_ref().map(|m| &m.manifest))?;
            find_usages(&sentences, &word)
        }
        (None, _, Some(dups)) => {
            require_file(dups, "dups file")?;
            let d = load_dups(dups)?;
            d.words.iter().flat_map(|w| d.usages(w)).collect()
        }
        _ => {
            return Err(CliError::invalid(
                "give either --word with --corpus, or --dups",
            ))
        }
    };
    if usages.is_empty() {
        log::warn!("no usages found; writing an empty store");
    }

    let mut prov;
    let records = if let Some(path) = &a.ckpt {
        require_file(path, "checkpoint")?;
        let ckpt = Checkpoint::load(path)?;
        prov = Provenance::new("extract", g.seed, &settings(a, "checkpoint"));
        prov.input("checkpoint", path)?;
        batch_extract(&ckpt, &usages, a.last_k)?
    } else if let Some(cmd) = &a.external_cmd {
        let mut parts = cmd.split_whitespace().map(String::from);
        let program = parts
            .next()
            .ok_or_else(|| CliError::invalid("--external-cmd is empty"))?;
        let args: Vec<String> = parts.collect();
        prov = Provenance::new("extract", g.seed, &settings(a, cmd));
        let states = run_subprocess(&program, &args, &usages)?;
        records_from_states(&states, &usages, a.last_k)?
    } else {
        let path = a.external_states.as_ref().expect("encoder checked above");
        require_file(path, "states file")?;
        prov = Provenance::new("extract", g.seed, &settings(a, "external-states"));
        prov.input("states", path)?;
        let states = read_responses(path)?;
        records_from_states(&states, &usages, a.last_k)?
    };
    if let Some(c) = &a.corpus {
        prov.input("corpus", c)?;
    }
    if let Some(d) = &a.dups {
        prov.input("dups", d)?;
    }
    write_file(
        &a.out,
        embeddings_to_jsonl_with(&records, Some(&prov.to_value())),
    )?;
    log::info!("wrote {} records to {}", records.len(), a.out.display());
    Ok(())
}

fn settings<'a>(a: &'a ExtractArgs, encoder: &'a str) -> Settings<'a> {
    Settings {
        word: a.word.as_deref(),
        last_k: a.last_k,
        encoder,
    }
}
