use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use super::{CorpusError, CorpusManifest, DecadeLabel, RawDocument, Sentence};

pub fn decade_file_name(decade: DecadeLabel) -> String {
    format!("coha_{}s.txt", decade.start_year())
}

pub fn parse_decade_file_name(name: &str) -> Option<DecadeLabel> {
    let year = name.strip_prefix("coha_")?.strip_suffix("s.txt")?;
    DecadeLabel::new(year.parse().ok()?).ok()
}

#[derive(Debug, Clone, Default)]
pub struct WriteReport {
    pub files: Vec<(DecadeLabel, PathBuf)>,
    pub sentences: usize,
    /// `(doc_id, sentence index)` of every shortened sentence.
    pub truncated: BTreeSet<(String, usize)>,
}

/// Writes one pre-training file per decade of the manifest.
///
/// Documents are written in manifest order (sorted ids), one sentence per
/// line, with exactly one blank line between documents. Each sentence of two
/// or more tokens is independently shortened with probability
/// `truncate_fraction` to a uniform prefix length in `[1, len - 1]`.
pub fn write_pretraining_corpus(
    manifest: &CorpusManifest,
    sentences: &BTreeMap<String, Vec<Sentence>>,
    truncate_fraction: f64,
    seed: u64,
    out_dir: &Path,
) -> Result<WriteReport, CorpusError> {
    if !(0.0..=1.0).contains(&truncate_fraction) {
        return Err(CorpusError::InvalidFraction(truncate_fraction));
    }
    for ids in manifest.decades.values() {
        for id in ids {
            match sentences.get(id) {
                None => return Err(CorpusError::MissingDocument(id.clone())),
                Some(s) if s.is_empty() => return Err(CorpusError::EmptyDocument(id.clone())),
                Some(_) => {}
            }
        }
    }
    fs::create_dir_all(out_dir).map_err(|e| CorpusError::io(out_dir, e))?;

    let mut report = WriteReport::default();
    for (decade, ids) in &manifest.decades {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(decade.start_year() as u64);

        let mut out = String::new();
        for (doc_pos, id) in ids.iter().enumerate() {
            if doc_pos > 0 {
                out.push('\n');
            }
            for sentence in &sentences[id] {
                let mut len = sentence.tokens.len();
                let draw: f64 = rng.random();
                if draw < truncate_fraction && len >= 2 {
                    len = rng.random_range(1..len);
                    report.truncated.insert((id.clone(), sentence.index));
                }
                out.push_str(&sentence.tokens[..len].join(" "));
                out.push('\n');
                report.sentences += 1;
            }
        }

        let path = out_dir.join(decade_file_name(*decade));
        fs::write(&path, out.as_bytes()).map_err(|e| CorpusError::io(&path, e))?;
        report.files.push((*decade, path));
    }
    Ok(report)
}

/// Parses a pre-training file into documents of sentences of tokens.
pub fn read_pretraining_file(path: &Path) -> Result<Vec<Vec<Vec<String>>>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    let malformed = |message: &str| CorpusError::Malformed {
        path: path.to_path_buf(),
        message: message.to_string(),
    };
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let body = text
        .strip_suffix('\n')
        .ok_or_else(|| malformed("missing final newline"))?;
    body.split("\n\n")
        .map(|doc| {
            doc.split('\n')
                .map(|line| {
                    if line.trim().is_empty() {
                        Err(malformed("more than one blank line between documents"))
                    } else {
                        Ok(line.split(' ').map(str::to_string).collect())
                    }
                })
                .collect()
        })
        .collect()
}

/// Reads every `coha_<decade>s.txt` file in `dir` back into sentences.
///
/// Document ids come from the manifest when one is given (its per-decade
/// order is the file order); otherwise they are synthesized as
/// `<decade>s-<n>`.
pub fn read_decade_corpus(
    dir: &Path,
    manifest: Option<&CorpusManifest>,
) -> Result<Vec<Sentence>, CorpusError> {
    let mut files: Vec<(DecadeLabel, PathBuf)> = fs::read_dir(dir)
        .map_err(|e| CorpusError::io(dir, e))?
        .filter_map(|entry| {
            let entry = entry.ok()?;
            let decade = parse_decade_file_name(entry.file_name().to_str()?)?;
            Some((decade, entry.path()))
        })
        .collect();
    files.sort();

    let mut out = Vec::new();
    for (decade, path) in files {
        let docs = read_pretraining_file(&path)?;
        let ids: Vec<String> = match manifest {
            Some(m) => {
                let ids = m.decades.get(&decade).cloned().unwrap_or_default();
                if ids.len() != docs.len() {
                    return Err(CorpusError::Malformed {
                        path,
                        message: format!(
                            "{} documents in file but {} in manifest",
                            docs.len(),
                            ids.len()
                        ),
                    });
                }
                ids
            }
            None => (0..docs.len())
                .map(|k| format!("{decade}-{k:05}"))
                .collect(),
        };
        for (doc_id, doc) in ids.into_iter().zip(docs) {
            for (index, tokens) in doc.into_iter().enumerate() {
                out.push(Sentence {
                    doc_id: doc_id.clone(),
                    index,
                    tokens,
                    decade,
                });
            }
        }
    }
    Ok(out)
}

/// Loads raw documents from a directory.
///
/// With a `manifest.tsv` (`doc_id`, `year`, `genre`, `path`; paths relative to
/// the directory) the listed files are read; otherwise every
/// `doc_<year>_<id>.txt` file is picked up.
pub fn load_documents(dir: &Path) -> Result<Vec<RawDocument>, CorpusError> {
    let manifest = dir.join("manifest.tsv");
    if manifest.is_file() {
        return load_from_manifest(dir, &manifest);
    }
    let mut docs = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| CorpusError::io(dir, e))? {
        let entry = entry.map_err(|e| CorpusError::io(dir, e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        let Some(stem) = name
            .strip_prefix("doc_")
            .and_then(|s| s.strip_suffix(".txt"))
        else {
            continue;
        };
        let (year, id) = stem.split_once('_').ok_or_else(|| CorpusError::Malformed {
            path: entry.path(),
            message: "expected doc_<year>_<id>.txt".into(),
        })?;
        let year: i32 = year.parse().map_err(|_| CorpusError::Malformed {
            path: entry.path(),
            message: format!("bad year `{year}`"),
        })?;
        let text =
            fs::read_to_string(entry.path()).map_err(|e| CorpusError::io(entry.path(), e))?;
        docs.push(RawDocument {
            doc_id: id.to_string(),
            year,
            genre: None,
            text,
        });
    }
    docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    Ok(docs)
}

fn load_from_manifest(dir: &Path, manifest: &Path) -> Result<Vec<RawDocument>, CorpusError> {
    let text = fs::read_to_string(manifest).map_err(|e| CorpusError::io(manifest, e))?;
    let mut docs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() || (lineno == 0 && line.starts_with("doc_id")) {
            continue;
        }
        let malformed = |message: String| CorpusError::Malformed {
            path: manifest.to_path_buf(),
            message: format!("line {}: {message}", lineno + 1),
        };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(malformed(format!(
                "expected 4 columns, found {}",
                cols.len()
            )));
        }
        let year: i32 = cols[1]
            .trim()
            .parse()
            .map_err(|_| malformed(format!("bad year `{}`", cols[1])))?;
        let path = dir.join(cols[3].trim());
        let body = fs::read_to_string(&path).map_err(|e| CorpusError::io(&path, e))?;
        docs.push(RawDocument {
            doc_id: cols[0].trim().to_string(),
            year,
            genre: Some(cols[2].trim().to_string()).filter(|g| !g.is_empty()),
            text: body,
        });
    }
    Ok(docs)
}
