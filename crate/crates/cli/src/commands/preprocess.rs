use clap::Args;
use histsem_core::corpus::{
    bucket_by_decade, load_documents, preprocess_text, select_by_keyword, split_sentences,
    write_pretraining_corpus, CorpusManifest, DecadeRange, RawDocument, Sentence,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{CliError, CliResult};
use crate::provenance::Provenance;
use crate::{require_dir, write_file, GlobalArgs};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    /// Directory of raw documents (`manifest.tsv` or `doc_<year>_<id>.txt`).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output directory for `coha_<decade>s.txt` files and `manifest.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// Inclusive decade range, e.g. `1910:2000`.
    #[arg(long)]
    pub decades: String,
    /// Keep only documents containing this word as a whole token.
    #[arg(long)]
    pub keyword: Option<String>,
    /// Fraction of sentences shortened to a random prefix.
    #[arg(long, default_value_t = 0.02)]
    pub truncate_fraction: f64,
}

#[derive(Serialize)]
struct Settings<'a> {
    decades: &'a str,
    keyword: Option<&'a str>,
    truncate_fraction: f64,
}

/// The manifest file: the bucketing result plus run details.
#[derive(Debug, Serialize, Deserialize)]
pub struct ManifestFile {
    pub manifest: CorpusManifest,
    /// Documents dropped because they held no text.
    pub empty_documents: Vec<String>,
    pub sentences: usize,
    pub truncated_sentences: usize,
    pub provenance: serde_json::Value,
}

pub fn read_manifest(dir: &Path) -> CliResult<Option<ManifestFile>> {
    let path = dir.join(MANIFEST_FILE);
    if !path.is_file() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

pub fn run(g: &GlobalArgs, a: &PreprocessArgs) -> CliResult<()> {
    require_dir(&a.input, "input")?;
    let range = DecadeRange::parse(&a.decades)
        .map_err(|e| CliError::invalid(format!("--decades {}: {e}", a.decades)))?;
    if !(0.0..=1.0).contains(&a.truncate_fraction) {
        return Err(CliError::invalid(format!(
            "--truncate-fraction {} outside [0, 1]",
            a.truncate_fraction
        )));
    }

    let mut docs = load_documents(&a.input)?;
    let mut empty_documents = Vec::new();
    docs.retain(|d| {
        let keep = !d.text.trim().is_empty();
        if !keep {
            log::warn!("dropping empty document `{}`", d.doc_id);
            empty_documents.push(d.doc_id.clone());
        }
        keep
    });
    if let Some(k) = &a.keyword {
        let before = docs.len();
        docs = select_by_keyword(&docs, k)?;
        log::info!("keyword `{k}` kept {} of {before} documents", docs.len());
    }

    let normalized: Vec<RawDocument> = docs
        .iter()
        .map(|d| RawDocument {
            text: preprocess_text(&d.text),
            ..d.clone()
        })
        .collect();
    let mut sentences: BTreeMap<String, Vec<Sentence>> = BTreeMap::new();
    let mut kept = Vec::new();
    for d in normalized {
        let s = split_sentences(&d);
        if s.is_empty() {
            log::warn!(
                "dropping document `{}`: nothing left after normalization",
                d.doc_id
            );
            empty_documents.push(d.doc_id.clone());
            continue;
        }
        sentences.insert(d.doc_id.clone(), s);
        kept.push(d);
    }
    empty_documents.sort();

    let mut manifest = bucket_by_decade(&kept, range)?;
    let settings = Settings {
        decades: &a.decades,
        keyword: a.keyword.as_deref(),
        truncate_fraction: a.truncate_fraction,
    };
    let mut prov = Provenance::new("preprocess", g.seed, &settings);
    prov.input("documents", &a.input)?;
    manifest.seed = g.seed;
    manifest.config_digest = prov.config_digest.clone();

    let report =
        write_pretraining_corpus(&manifest, &sentences, a.truncate_fraction, g.seed, &a.out)?;
    if !manifest.excluded.is_empty() {
        log::warn!(
            "{} document(s) outside {}: {}",
            manifest.excluded_count,
            a.decades,
            manifest.excluded.join(", ")
        );
    }
    let file = ManifestFile {
        manifest,
        empty_documents,
        sentences: report.sentences,
        truncated_sentences: report.truncated.len(),
        provenance: prov.to_value(),
    };
    let mut json = serde_json::to_string_pretty(&file).expect("manifest serializes");
    json.push('\n');
    write_file(&a.out.join(MANIFEST_FILE), json)?;
    log::info!(
        "wrote {} sentences ({} truncated) to {}",
        report.sentences,
        report.truncated.len(),
        a.out.display()
    );
    Ok(())
}
