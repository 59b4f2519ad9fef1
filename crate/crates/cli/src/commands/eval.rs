use clap::{Args, ValueEnum};
use histsem_core::encoder::{read_embeddings, EmbeddingRecord};
use histsem_core::stats::{
    embedding_shift, mantel_test, pairwise_cosines, MantelOptions, PermutationMode, ShiftReport,
    Tail,
};
use histsem_core::usage::{build_human_matrix, build_model_matrix, load_dups, SimilarityMatrix};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{CliError, CliResult};
use crate::provenance::Provenance;
use crate::{require_file, write_file, GlobalArgs, ReportFormat};

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailArg {
    Greater,
    TwoSided,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Auto,
    Sampled,
    Exhaustive,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Usage-pair judgment CSV.
    #[arg(long)]
    pub dups: PathBuf,
    /// Embedding store covering every usage in `--dups`.
    #[arg(long)]
    pub emb: PathBuf,
    #[arg(long, default_value_t = 999)]
    pub perms: usize,
    #[arg(long, value_enum, default_value_t = TailArg::Greater)]
    pub tail: TailArg,
    #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value_t = ReportFormat::Tsv)]
    pub format: ReportFormat,
    /// Report path (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write each word's human and model matrices here.
    #[arg(long)]
    pub matrices: Option<PathBuf>,
}

#[derive(Serialize)]
struct EvalSettings {
    perms: usize,
    tail: TailArg,
    mode: ModeArg,
    format: ReportFormat,
}

#[derive(Debug, Serialize)]
struct WordResult {
    word: String,
    usages: usize,
    pairs: usize,
    rho: f64,
    p_value: f64,
    permutations: usize,
    observed_cells: usize,
    exhaustive: bool,
}

#[derive(Serialize)]
struct EvalReport<'a> {
    provenance: &'a Provenance,
    results: &'a [WordResult],
}

fn read_store(path: &Path) -> CliResult<Vec<EmbeddingRecord>> {
    require_file(path, "embedding store")?;
    Ok(read_embeddings(path)?)
}

fn output(out: &Option<PathBuf>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => write_file(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn eval_dups(g: &GlobalArgs, a: &EvalArgs) -> CliResult<()> {
    require_file(&a.dups, "dups file")?;
    let settings = EvalSettings {
        perms: a.perms,
        tail: a.tail,
        mode: a.mode,
        format: a.format,
    };
    let mut prov = Provenance::new("eval-dups", g.seed, &settings);
    prov.input("dups", &a.dups)?.input("emb", &a.emb)?;
    let dataset = load_dups(&a.dups)?;
    let records = read_store(&a.emb)?;
    let opts = MantelOptions {
        permutations: a.perms,
        seed: g.seed,
        tail: match a.tail {
            TailArg::Greater => Tail::Greater,
            TailArg::TwoSided => Tail::TwoSided,
        },
        mode: match a.mode {
            ModeArg::Auto => PermutationMode::Auto,
            ModeArg::Sampled => PermutationMode::Sampled,
            ModeArg::Exhaustive => PermutationMode::Exhaustive,
        },
    };

    let pair_counts = dataset.pair_counts();
    let mut results = Vec::new();
    for word in &dataset.words {
        let human = build_human_matrix(&dataset, word)?;
        let word_records: Vec<EmbeddingRecord> = records
            .iter()
            .filter(|r| &r.word == word)
            .cloned()
            .collect();
        let model = build_model_matrix(&word_records, word, &human)
            .map_err(|e| CliError::Misaligned(format!("word `{word}`: {e}")))?;
        if let Some(dir) = &a.matrices {
            write_file(&dir.join(format!("{word}.human.tsv")), matrix_tsv(&human))?;
            write_file(&dir.join(format!("{word}.model.tsv")), matrix_tsv(&model))?;
        }
        let r = mantel_test(&human, &model, &opts)
            .map_err(|e| CliError::from(e).context(&format!("word `{word}`")))?;
        results.push(WordResult {
            word: word.clone(),
            usages: human.dim(),
            pairs: pair_counts[word],
            rho: r.rho,
            p_value: r.p_value,
            permutations: r.permutations,
            observed_cells: r.observed_cells,
            exhaustive: r.exhaustive,
        });
    }

    let text = match a.format {
        ReportFormat::Tsv => {
            let mut s = prov.comment_lines();
            s.push_str("word\trho\tp\n");
            for r in &results {
                let _ = writeln!(s, "{}", table_row(&r.word, r.rho, r.p_value));
            }
            s
        }
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(&EvalReport {
                provenance: &prov,
                results: &results,
            })
            .expect("report serializes");
            s.push('\n');
            s
        }
    };
    output(&a.out, &text)
}

/// One `word<TAB>rho<TAB>p` row with four decimals.
pub fn table_row(word: &str, rho: f64, p: f64) -> String {
    format!("{word}\t{rho:.4}\t{p:.4}")
}

fn matrix_tsv(m: &SimilarityMatrix) -> String {
    let mut s = String::from("usage_id");
    for id in m.usage_ids() {
        s.push('\t');
        s.push_str(id);
    }
    s.push('\n');
    for (i, id) in m.usage_ids().iter().enumerate() {
        s.push_str(id);
        for j in 0..m.dim() {
            match m.get(i, j) {
                Some(v) => {
                    let _ = write!(s, "\t{v}");
                }
                None => s.push_str("\tNA"),
            }
        }
        s.push('\n');
    }
    s
}

#[derive(Args, Debug)]
pub struct ShiftArgs {
    /// Store from the baseline encoder.
    #[arg(long)]
    pub old: PathBuf,
    /// Store from the retrained encoder, over the same usages.
    #[arg(long)]
    pub new: PathBuf,
    /// Restrict to one word.
    #[arg(long)]
    pub word: Option<String>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    pub format: ReportFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct ShiftFile<'a> {
    provenance: &'a Provenance,
    reports: &'a [ShiftReport],
}

fn by_word(records: &[EmbeddingRecord]) -> BTreeMap<&str, Vec<&EmbeddingRecord>> {
    let mut out: BTreeMap<&str, Vec<&EmbeddingRecord>> = BTreeMap::new();
    for r in records {
        out.entry(r.word.as_str()).or_default().push(r);
    }
    out
}

pub fn shift_report(g: &GlobalArgs, a: &ShiftArgs) -> CliResult<()> {
    #[derive(Serialize)]
    struct Settings<'a> {
        word: Option<&'a str>,
        format: ReportFormat,
    }
    let mut prov = Provenance::new(
        "shift-report",
        g.seed,
        &Settings {
            word: a.word.as_deref(),
            format: a.format,
        },
    );
    prov.input("old", &a.old)?.input("new", &a.new)?;
    let old = read_store(&a.old)?;
    let new = read_store(&a.new)?;
    let (old_words, new_words) = (by_word(&old), by_word(&new));

    let words: Vec<&str> = match &a.word {
        Some(w) => vec![w.as_str()],
        None => old_words
            .keys()
            .chain(new_words.keys())
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    let mut reports = Vec::new();
    for word in words {
        let empty = Vec::new();
        let o = old_words.get(word).unwrap_or(&empty);
        let n = new_words.get(word).unwrap_or(&empty);
        let ids = |rs: &[&EmbeddingRecord]| -> BTreeSet<String> {
            rs.iter().map(|r| r.usage_id.clone()).collect()
        };
        if ids(o) != ids(n) {
            return Err(CliError::Misaligned(format!(
                "word `{word}`: the two stores cover different usage ids"
            )));
        }
        if o.len() < 2 {
            log::warn!("word `{word}`: fewer than two usages, no pairs to compare");
            continue;
        }
        let sims = |rs: &[&EmbeddingRecord]| {
            pairwise_cosines(
                rs.iter()
                    .map(|r| (r.usage_id.as_str(), r.vector.as_slice())),
            )
        };
        let report = embedding_shift(word, &sims(o)?, &sims(n)?)?;
        reports.push(report);
    }

    let text = match a.format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(&ShiftFile {
                provenance: &prov,
                reports: &reports,
            })
            .expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Tsv => {
            let mut s = prov.comment_lines();
            s.push_str("word\tusage_a\tusage_b\told\tnew\tshift\n");
            for r in &reports {
                for p in &r.shifts {
                    let _ = writeln!(
                        s,
                        "{}\t{}\t{}\t{}\t{}\t{}",
                        r.word, p.a, p.b, p.old, p.new, p.shift
                    );
                }
                let _ = writeln!(
                    s,
                    "# {}: average={} max_increase={}|{}:{} max_decrease={}|{}:{}",
                    r.word,
                    r.average,
                    r.max_increase.a,
                    r.max_increase.b,
                    r.max_increase.shift,
                    r.max_decrease.a,
                    r.max_decrease.b,
                    r.max_decrease.shift
                );
            }
            s
        }
    };
    output(&a.out, &text)
}
