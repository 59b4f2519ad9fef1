mod common;

use common::{histsem, histsem_ok, p};
use histsem_core::encoder::{read_embeddings, write_embeddings, Checkpoint};
use std::fs;
use std::path::{Path, PathBuf};

fn bundled() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic")
}

fn code(out: &std::process::Output) -> Option<i32> {
    out.status.code()
}

fn corpus(dir: &Path) -> PathBuf {
    let out = dir.join("corpus");
    histsem_ok([
        "preprocess",
        "--in",
        p(&bundled().join("docs")),
        "--out",
        p(&out),
        "--decades",
        "1910:2000",
        "--keyword",
        "coach",
    ]);
    out
}

#[test]
fn bad_flags_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&histsem(["preprocess", "--out", p(d)])), Some(2));
    assert_eq!(
        code(&histsem(["--jobs", "0", "init", "--out", p(&d.join("x"))])),
        Some(2)
    );
    let no_encoder = histsem([
        "extract",
        "--dups",
        p(&bundled().join("dups.csv")),
        "--out",
        p(&d.join("e")),
    ]);
    assert_eq!(code(&no_encoder), Some(2));
    assert!(String::from_utf8_lossy(&no_encoder.stderr).contains("encoder is required"));
    let bad_range = histsem([
        "preprocess",
        "--in",
        p(&bundled().join("docs")),
        "--out",
        p(&d.join("c")),
        "--decades",
        "1915:2000",
    ]);
    assert_eq!(code(&bad_range), Some(2));
}

#[test]
fn missing_inputs_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let missing = d.join("nope");
    let out = histsem([
        "preprocess",
        "--in",
        p(&missing),
        "--out",
        p(&d.join("c")),
        "--decades",
        "1910:2000",
    ]);
    assert_eq!(code(&out), Some(3));
    let out = histsem([
        "extract",
        "--dups",
        p(&missing),
        "--ckpt",
        p(&missing),
        "--out",
        p(&d.join("e")),
    ]);
    assert_eq!(code(&out), Some(3));
}

#[test]
fn plots_are_two_dimensional() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = histsem([
        "pca-plot",
        "--emb",
        p(&d.join("a")),
        "--dims",
        "3",
        "--out-csv",
        p(&d.join("x.csv")),
        "--out-svg",
        p(&d.join("x.svg")),
    ]);
    assert_eq!(code(&out), Some(2));
}

#[test]
fn misaligned_stores_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let dups = bundled().join("dups.csv");
    let (mock, emb, partial) = (
        d.join("mock.ckpt"),
        d.join("emb.jsonl"),
        d.join("part.jsonl"),
    );
    histsem_ok(["init", "--kind", "mock", "--out", p(&mock)]);
    histsem_ok([
        "extract",
        "--dups",
        p(&dups),
        "--ckpt",
        p(&mock),
        "--out",
        p(&emb),
    ]);

    let mut records = read_embeddings(&emb).unwrap();
    let dropped = records.iter().position(|r| r.word == "bank").unwrap();
    records.remove(dropped);
    write_embeddings(&partial, &records).unwrap();

    let eval = histsem(["eval-dups", "--dups", p(&dups), "--emb", p(&partial)]);
    assert_eq!(code(&eval), Some(4));
    assert!(String::from_utf8_lossy(&eval.stderr).contains("bank"));
    let shift = histsem(["shift-report", "--old", p(&emb), "--new", p(&partial)]);
    assert_eq!(code(&shift), Some(4));
}

#[test]
fn eval_dups_prints_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let dups = bundled().join("dups.csv");
    let (mock, emb) = (d.join("mock.ckpt"), d.join("emb.jsonl"));
    histsem_ok(["init", "--kind", "mock", "--out", p(&mock)]);
    histsem_ok([
        "extract",
        "--dups",
        p(&dups),
        "--ckpt",
        p(&mock),
        "--out",
        p(&emb),
    ]);
    let out = histsem_ok([
        "eval-dups",
        "--dups",
        p(&dups),
        "--emb",
        p(&emb),
        "--perms",
        "99",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], "word\trho\tp");
    assert_eq!(body.len(), 5);
    for row in &body[1..] {
        let cols: Vec<&str> = row.split('\t').collect();
        assert_eq!(cols.len(), 3);
        assert_eq!(cols[1].split('.').nth(1).map(str::len), Some(4));
    }
    assert!(text.contains("# command=eval-dups"));
}

#[test]
fn zero_step_pretraining_keeps_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = corpus(d);
    let (base, same) = (d.join("base.ckpt"), d.join("same.ckpt"));
    histsem_ok([
        "init",
        "--hidden-dim",
        "16",
        "--layers",
        "2",
        "--out",
        p(&base),
    ]);
    histsem_ok([
        "pretrain-toy",
        "--base",
        p(&base),
        "--corpus",
        p(&corpus),
        "--steps",
        "0",
        "--out",
        p(&same),
    ]);
    let (a, b) = (
        Checkpoint::load(&base).unwrap(),
        Checkpoint::load(&same).unwrap(),
    );
    assert_eq!(a.digest(), b.digest());
    let run = b.provenance().last().unwrap();
    assert_eq!(run.steps, 0);
    assert!(run.note.as_deref().unwrap().contains("unchanged"));

    let (e1, e2) = (d.join("a.jsonl"), d.join("b.jsonl"));
    for (ck, out) in [(&base, &e1), (&same, &e2)] {
        histsem_ok([
            "extract",
            "--word",
            "coach",
            "--corpus",
            p(&corpus),
            "--ckpt",
            p(ck),
            "--last-k",
            "2",
            "--out",
            p(out),
        ]);
    }
    let vectors = |path: &Path| -> Vec<Vec<f64>> {
        read_embeddings(path)
            .unwrap()
            .into_iter()
            .map(|r| r.vector)
            .collect()
    };
    assert_eq!(vectors(&e1), vectors(&e2));
}

#[test]
fn preprocess_writes_manifest_and_decade_files() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = corpus(dir.path());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(corpus.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest["sentences"].as_u64().unwrap() > 0);
    assert!(manifest["empty_documents"].as_array().unwrap().len() == 1);
    assert_eq!(manifest["provenance"]["command"], "preprocess");
    let files: Vec<String> = fs::read_dir(&corpus)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("coha_"))
        .collect();
    assert_eq!(files.len(), 10);
}

#[test]
fn seed_flag_and_environment_agree() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (a, b) = (d.join("a.csv"), d.join("b.csv"));
    let mock = d.join("mock.ckpt");
    histsem_ok(["init", "--kind", "mock", "--out", p(&mock)]);
    histsem_ok([
        "synth-dups",
        "--seed",
        "9",
        "--ckpt",
        p(&mock),
        "--out",
        p(&a),
    ]);
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_histsem"))
        .args(["synth-dups", "--ckpt", p(&mock), "--out", p(&b)])
        .env("HISTSEM_SEED", "9")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}
