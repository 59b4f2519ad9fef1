use clap::Args;
use histsem_core::corpus::DecadeRange;
use histsem_core::encoder::Checkpoint;
use histsem_core::synth::{raw_documents, synthetic_dups};
use serde::Serialize;
use std::path::{Path, PathBuf};

use crate::error::{CliError, CliResult};
use crate::provenance::Provenance;
use crate::{require_file, write_file, GlobalArgs};

#[derive(Args, Debug)]
pub struct SynthCorpusArgs {
    /// Directory for `doc_<year>_<id>.txt` files.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "1910:2000")]
    pub decades: String,
    #[arg(long, default_value_t = 6)]
    pub docs_per_decade: usize,
}

#[derive(Serialize)]
struct CorpusSettings<'a> {
    decades: &'a str,
    docs_per_decade: usize,
}

fn provenance_sidecar(path: &Path, prov: &Provenance) -> CliResult<()> {
    let mut json = serde_json::to_string_pretty(prov).expect("provenance serializes");
    json.push('\n');
    write_file(path, json)
}

pub fn corpus(g: &GlobalArgs, a: &SynthCorpusArgs) -> CliResult<()> {
    let range = DecadeRange::parse(&a.decades)
        .map_err(|e| CliError::invalid(format!("--decades {}: {e}", a.decades)))?;
    let decades: Vec<_> = range.decades().collect();
    let docs = raw_documents(g.seed, a.docs_per_decade, &decades);
    for d in &docs {
        write_file(
            &a.out.join(format!("doc_{}_{}.txt", d.year, d.doc_id)),
            &d.text,
        )?;
    }
    let prov = Provenance::new(
        "synth-corpus",
        g.seed,
        &CorpusSettings {
            decades: &a.decades,
            docs_per_decade: a.docs_per_decade,
        },
    );
    provenance_sidecar(&a.out.join("synth.json"), &prov)?;
    log::info!("wrote {} documents to {}", docs.len(), a.out.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct SynthDupsArgs {
    /// Encoder whose similarities the scores follow.
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "coach,plane,bank,cell")]
    pub words: Vec<String>,
    #[arg(long, default_value_t = 8)]
    pub usages_per_word: usize,
    /// Standard deviation of per-annotator score noise.
    #[arg(long, default_value_t = 0.3)]
    pub noise: f64,
}

#[derive(Serialize)]
struct DupsSettings<'a> {
    words: &'a [String],
    usages_per_word: usize,
    noise: f64,
}

/// Writes the CSV and, next to it, `<out>.provenance.json`.
pub fn dups(g: &GlobalArgs, a: &SynthDupsArgs) -> CliResult<()> {
    require_file(&a.ckpt, "checkpoint")?;
    if a.usages_per_word < 3 {
        return Err(CliError::invalid("--usages-per-word must be at least 3"));
    }
    let ckpt = Checkpoint::load(&a.ckpt)?;
    let words: Vec<&str> = a.words.iter().map(String::as_str).collect();
    let csv = synthetic_dups(&ckpt, g.seed, &words, a.usages_per_word, a.noise)?;
    let mut prov = Provenance::new(
        "synth-dups",
        g.seed,
        &DupsSettings {
            words: &a.words,
            usages_per_word: a.usages_per_word,
            noise: a.noise,
        },
    );
    prov.input("checkpoint", &a.ckpt)?;
    write_file(&a.out, csv)?;
    let mut side = a.out.clone().into_os_string();
    side.push(".provenance.json");
    provenance_sidecar(Path::new(&side), &prov)
}
