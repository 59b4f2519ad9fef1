//! `histsem`: corpus preparation, encoder training, embedding extraction and
//! evaluation reports from the command line.
//!
//! Exit codes: 0 success, 2 usage or malformed input, 3 I/O failure,
//! 4 misaligned usage ids.

mod commands;
mod error;
mod provenance;
mod svg;

use clap::{Args, Parser, Subcommand, ValueEnum};

use error::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "histsem",
    version,
    about = "Diachronic semantic change toolkit"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Seed for every random choice; recorded in all outputs.
    #[arg(long, global = true, env = "HISTSEM_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Normalize raw documents into per-decade pre-training files.
    Preprocess(commands::preprocess::PreprocessArgs),
    /// Create an untrained toy checkpoint or a mock encoder file.
    Init(commands::train::InitArgs),
    /// Continue pre-training a toy checkpoint on decade files.
    PretrainToy(commands::train::PretrainArgs),
    /// Extract focus-word usage embeddings.
    Extract(commands::extract::ExtractArgs),
    /// Correlate model similarities with human usage-pair judgments.
    EvalDups(commands::eval::EvalArgs),
    /// Per-pair similarity change between two embedding stores.
    ShiftReport(commands::eval::ShiftArgs),
    /// 2-D PCA coordinates and an SVG scatter of one or two stores.
    PcaPlot(commands::plot::PlotArgs),
    /// Write a seeded synthetic raw-document corpus.
    SynthCorpus(commands::synth::SynthCorpusArgs),
    /// Write a synthetic usage-pair judgment file that tracks an encoder.
    SynthDups(commands::synth::SynthDupsArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Tsv,
    Json,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.global.jobs {
        if jobs == 0 {
            return Err(CliError::invalid("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::invalid(format!("thread pool: {e}")))?;
    }
    let g = &cli.global;
    match cli.command {
        Command::Preprocess(a) => commands::preprocess::run(g, &a),
        Command::Init(a) => commands::train::init(g, &a),
        Command::PretrainToy(a) => commands::train::pretrain(g, &a),
        Command::Extract(a) => commands::extract::run(g, &a),
        Command::EvalDups(a) => commands::eval::eval_dups(g, &a),
        Command::ShiftReport(a) => commands::eval::shift_report(g, &a),
        Command::PcaPlot(a) => commands::plot::run(g, &a),
        Command::SynthCorpus(a) => commands::synth::corpus(g, &a),
        Command::SynthDups(a) => commands::synth::dups(g, &a),
    }
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

pub(crate) fn ensure_parent(path: &std::path::Path) -> Result<(), CliError> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => {
            std::fs::create_dir_all(p).map_err(|e| CliError::io(p, e))
        }
        _ => Ok(()),
    }
}

pub(crate) fn write_file(
    path: &std::path::Path,
    contents: impl AsRef<[u8]>,
) -> Result<(), CliError> {
    ensure_parent(path)?;
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub(crate) fn require_file(path: &std::path::Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Io(format!("{what} {} not found", path.display())))
    }
}

pub(crate) fn require_dir(path: &std::path::Path, what: &str) -> Result<(), CliError> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::Io(format!(
            "{what} {} is not a directory",
            path.display()
        )))
    }
}
