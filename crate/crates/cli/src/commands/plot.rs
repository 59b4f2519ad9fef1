use clap::Args;
use histsem_core::encoder::{read_embeddings, EmbeddingRecord};
use histsem_core::stats::pca_project;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::error::{CliError, CliResult};
use crate::provenance::Provenance;
use crate::svg::{scatter, Point};
use crate::{require_file, write_file, GlobalArgs};

#[derive(Args, Debug)]
pub struct PlotArgs {
    /// Baseline store; its points are labelled `<n>`.
    #[arg(long)]
    pub emb: PathBuf,
    /// Retrained store over the same usages; points labelled `<n>_new`.
    #[arg(long)]
    pub emb_new: Option<PathBuf>,
    /// Restrict to one word.
    #[arg(long)]
    pub word: Option<String>,
    /// Projection dimensions; plots are 2-D only.
    #[arg(long, default_value_t = 2)]
    pub dims: usize,
    #[arg(long)]
    pub out_csv: PathBuf,
    #[arg(long)]
    pub out_svg: PathBuf,
}

#[derive(Serialize)]
struct Settings<'a> {
    word: Option<&'a str>,
    dims: usize,
    overlay: bool,
}

pub fn run(g: &GlobalArgs, a: &PlotArgs) -> CliResult<()> {
    if a.dims != 2 {
        return Err(CliError::invalid(format!(
            "--dims {}: plots are 2-D; use the library's pca_project for other dimensions",
            a.dims
        )));
    }
    require_file(&a.emb, "embedding store")?;
    if let Some(p) = &a.emb_new {
        require_file(p, "embedding store")?;
    }
    let mut prov = Provenance::new(
        "pca-plot",
        g.seed,
        &Settings {
            word: a.word.as_deref(),
            dims: a.dims,
            overlay: a.emb_new.is_some(),
        },
    );
    prov.input("emb", &a.emb)?;
    if let Some(p) = &a.emb_new {
        prov.input("emb_new", p)?;
    }

    let keep = |r: &EmbeddingRecord| a.word.as_ref().is_none_or(|w| &r.word == w);
    let base: Vec<EmbeddingRecord> = read_embeddings(&a.emb)?.into_iter().filter(keep).collect();
    // (label, usage id, store, vector)
    let mut rows: Vec<(String, String, &str, Vec<f64>)> = base
        .iter()
        .enumerate()
        .map(|(i, r)| {
            (
                (i + 1).to_string(),
                r.usage_id.clone(),
                "base",
                r.vector.clone(),
            )
        })
        .collect();
    if let Some(p) = &a.emb_new {
        let mut new: BTreeMap<String, EmbeddingRecord> = read_embeddings(p)?
            .into_iter()
            .filter(keep)
            .map(|r| (r.usage_id.clone(), r))
            .collect();
        for (i, r) in base.iter().enumerate() {
            let m = new.remove(&r.usage_id).ok_or_else(|| {
                CliError::Misaligned(format!(
                    "word `{}`: usage `{}` missing from {}",
                    r.word,
                    r.usage_id,
                    p.display()
                ))
            })?;
            rows.push((format!("{}_new", i + 1), m.usage_id, "new", m.vector));
        }
        if let Some((id, r)) = new.into_iter().next() {
            return Err(CliError::Misaligned(format!(
                "word `{}`: usage `{id}` missing from {}",
                r.word,
                a.emb.display()
            )));
        }
    }

    let vectors: Vec<Vec<f64>> = rows.iter().map(|r| r.3.clone()).collect();
    let proj = pca_project(&vectors, a.dims)?;

    let mut csv = prov.comment_lines();
    for (k, v) in proj.explained_variance.iter().enumerate() {
        let _ = writeln!(csv, "# explained_variance.pc{}={v}", k + 1);
    }
    csv.push_str("label,usage_id,store,pc1,pc2\n");
    let mut points = Vec::new();
    for (row, c) in rows.iter().zip(&proj.coordinates) {
        let _ = writeln!(csv, "{},{},{},{},{}", row.0, row.1, row.2, c[0], c[1]);
        points.push(Point {
            label: row.0.clone(),
            x: c[0],
            y: c[1],
            series: usize::from(row.2 == "new"),
        });
    }
    let title = match &a.word {
        Some(w) => format!("PCA of usages of \"{w}\""),
        None => "PCA of usage embeddings".to_string(),
    };
    let desc = serde_json::to_string(&prov).expect("provenance serializes");
    let svg = scatter(&points, &title, "PC1", "PC2", &desc);
    write_file(&a.out_csv, csv)?;
    write_file(&a.out_svg, svg)?;
    Ok(())
}
