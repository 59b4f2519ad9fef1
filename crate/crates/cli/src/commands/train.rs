use clap::{Args, ValueEnum};
use histsem_core::corpus::{parse_decade_file_name, DecadeRange};
use histsem_core::encoder::{continue_pretraining, Checkpoint, EncoderConfig};
use std::path::PathBuf;

use crate::error::{CliError, CliResult};
use crate::{ensure_parent, require_dir, require_file, GlobalArgs};

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncoderChoice {
    Toy,
    Mock,
}

#[derive(Args, Debug)]
pub struct InitArgs {
    #[arg(long, value_enum, default_value_t = EncoderChoice::Toy)]
    pub kind: EncoderChoice,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub max_seq_length: Option<usize>,
    /// Mock encoder context window (words on each side).
    #[arg(long, default_value_t = 2)]
    pub window: usize,
}

pub fn init(g: &GlobalArgs, a: &InitArgs) -> CliResult<()> {
    let base = EncoderConfig::toy();
    let config = EncoderConfig {
        seed: g.seed,
        hidden_dim: a.hidden_dim.unwrap_or(base.hidden_dim),
        num_layers: a.layers.unwrap_or(base.num_layers),
        max_seq_length: a.max_seq_length.unwrap_or(base.max_seq_length),
        ..base
    };
    let ckpt = match a.kind {
        EncoderChoice::Toy => Checkpoint::init_toy(config)?,
        EncoderChoice::Mock => Checkpoint::init_mock(config, a.window)?,
    };
    ensure_parent(&a.out)?;
    ckpt.save(&a.out)?;
    log::info!("wrote {} ({})", a.out.display(), ckpt.digest());
    Ok(())
}

#[derive(Args, Debug)]
pub struct PretrainArgs {
    #[arg(long)]
    pub base: PathBuf,
    /// Directory of `coha_<decade>s.txt` files.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub steps: usize,
    /// Train only on these decades, e.g. `1910:1950`.
    #[arg(long)]
    pub decades: Option<String>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub warmup_steps: Option<usize>,
    #[arg(long)]
    pub max_seq_length: Option<usize>,
}

pub fn pretrain(g: &GlobalArgs, a: &PretrainArgs) -> CliResult<()> {
    require_file(&a.base, "base checkpoint")?;
    require_dir(&a.corpus, "corpus")?;
    let range = a
        .decades
        .as_deref()
        .map(DecadeRange::parse)
        .transpose()
        .map_err(|e| CliError::invalid(format!("--decades: {e}")))?;
    let base = Checkpoint::load(&a.base)?;

    let mut files: Vec<(_, PathBuf)> = std::fs::read_dir(&a.corpus)
        .map_err(|e| CliError::io(&a.corpus, e))?
        .filter_map(Result::ok)
        .filter_map(|e| {
            let decade = parse_decade_file_name(e.file_name().to_str()?)?;
            Some((decade, e.path()))
        })
        .filter(|(d, _)| {
            range
                .as_ref()
                .is_none_or(|r| r.contains_year(d.start_year()))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::invalid(format!(
            "no decade files in {}",
            a.corpus.display()
        )));
    }
    let paths: Vec<PathBuf> = files.into_iter().map(|(_, p)| p).collect();

    let c = base.config();
    let config = EncoderConfig {
        seed: g.seed,
        num_train_steps: a.steps,
        learning_rate: a.learning_rate.unwrap_or(c.learning_rate),
        train_batch_size: a.batch_size.unwrap_or(c.train_batch_size),
        num_warmup_steps: a.warmup_steps.unwrap_or(c.num_warmup_steps),
        max_seq_length: a.max_seq_length.unwrap_or(c.max_seq_length),
        ..c.clone()
    };
    let out = continue_pretraining(&base, &paths, &config)?;
    ensure_parent(&a.out)?;
    out.save(&a.out)?;
    log::info!("wrote {} ({})", a.out.display(), out.digest());
    Ok(())
}
