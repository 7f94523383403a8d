use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kwdrift::keywords::read_history;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kwdrift")).args(args).output().expect("spawn kwdrift")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "kwdrift {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &str = "dim = 10\nepochs = 8\nk_clusters = 20\nkmax = 30\n";

#[test]
fn unknown_flag_is_a_usage_error_with_no_side_effects() {
    let dir = tempfile::tempdir().unwrap();
    let docs = dir.path().join("docs.jsonl");
    let vocab = dir.path().join("vocab.tsv");
    let sample = repo_root().join("data/sample/wiki.jsonl");
    let out = run(&["ingest", "--input", s(&sample), "--docs", s(&docs), "--vocab", s(&vocab), "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!docs.exists() && !vocab.exists());
}

#[test]
fn config_errors_exit_1_and_data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let docs = dir.path().join("docs.jsonl");
    let vocab = dir.path().join("vocab.tsv");
    let sample = repo_root().join("data/sample/wiki.jsonl");

    let out = run(&["--set", "dim=lots", "ingest", "--input", s(&sample), "--docs", s(&docs), "--vocab", s(&vocab)]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["--set", "nonsense=1", "ingest", "--input", s(&sample), "--docs", s(&docs), "--vocab", s(&vocab)]);
    assert_eq!(out.status.code(), Some(1));

    let missing = dir.path().join("missing.jsonl");
    let out = run(&["ingest", "--input", s(&missing), "--docs", s(&docs), "--vocab", s(&vocab)]);
    assert_eq!(out.status.code(), Some(2));

    let garbage = dir.path().join("garbage.bin");
    std::fs::write(&garbage, b"not a table").unwrap();
    let out = run(&["train", "--cooc", s(&garbage), "--vocab", s(&vocab), "--vectors", s(&dir.path().join("v.txt"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn resolved_config_goes_to_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "dim = 12\nwindow = 4\n").unwrap();
    let sample = repo_root().join("data/sample/wiki.jsonl");
    let out = ok(&[
        "--config",
        s(&cfg),
        "--set",
        "window=6",
        "ingest",
        "--input",
        s(&sample),
        "--docs",
        s(&dir.path().join("d.jsonl")),
        "--vocab",
        s(&dir.path().join("v.tsv")),
    ]);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("# kwdrift ingest: resolved config"));
    assert!(err.contains("dim = 12"));
    assert!(err.contains("window = 6"));
}

fn build_space(dir: &Path) -> Vec<Vec<u8>> {
    let sample = repo_root().join("data/sample/redpill.jsonl");
    let p = |n: &str| dir.join(n);
    ok(&["ingest", "--input", s(&sample), "--docs", s(&p("d.jsonl")), "--vocab", s(&p("v.tsv"))]);
    ok(&["cooccur", "--docs", s(&p("d.jsonl")), "--vocab", s(&p("v.tsv")), "--out", s(&p("c.bin"))]);
    ok(&[
        "train",
        "--cooc",
        s(&p("c.bin")),
        "--vocab",
        s(&p("v.tsv")),
        "--model",
        s(&p("m.bin")),
        "--vectors",
        s(&p("vec.txt")),
        "--epochs",
        "10",
    ]);
    ok(&["cluster", "--vectors", s(&p("vec.txt")), "--k", "10", "--report", s(&p("clusters.csv"))]);
    ["d.jsonl", "v.tsv", "c.bin", "m.bin", "vec.txt", "clusters.csv"]
        .iter()
        .map(|n| std::fs::read(p(n)).unwrap())
        .collect()
}

#[test]
fn deterministic_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(build_space(a.path()), build_space(b.path()));
}

#[test]
fn iterate_matches_manual_stage_by_stage_rounds() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    std::fs::write(p("small.cfg"), SMALL).unwrap();
    let cfg = p("small.cfg");
    let drift = repo_root().join("data/drift/five_rounds.json");
    let rounds_dir = p("rounds");
    ok(&["simulate", "--drift", s(&drift), "--out-dir", s(&rounds_dir)]);
    let collector = format!("file:{}", s(&rounds_dir));

    ok(&[
        "--config",
        s(&cfg),
        "iterate",
        "--seeds",
        "#metoo,#timesup",
        "--rounds",
        "3",
        "--collector",
        &collector,
        "--history",
        s(&p("auto.jsonl")),
    ]);
    let sim_collector = format!("sim:{}", s(&drift));
    ok(&[
        "--config",
        s(&cfg),
        "iterate",
        "--seeds",
        "#metoo,#timesup",
        "--rounds",
        "3",
        "--collector",
        &sim_collector,
        "--history",
        s(&p("auto_sim.jsonl")),
    ]);

    let state = p("manual.jsonl");
    let (docs, vocab, cooc, model) = (p("docs.jsonl"), p("vocab.tsv"), p("c.bin"), p("m.bin"));
    for round in 1..=3 {
        let r = round.to_string();
        let mut ingest = vec![
            "--config",
            s(&cfg),
            "ingest",
            "--collector",
            &collector,
            "--round",
            &r,
            "--seeds",
            "#metoo,#timesup",
            "--docs",
            s(&docs),
            "--vocab",
            s(&vocab),
            "--append",
        ];
        if round > 1 {
            ingest.extend(["--keywords", s(&state)]);
        }
        ok(&ingest);
        ok(&["--config", s(&cfg), "cooccur", "--docs", s(&docs), "--vocab", s(&vocab), "--out", s(&cooc)]);
        ok(&["--config", s(&cfg), "train", "--cooc", s(&cooc), "--vocab", s(&vocab), "--model", s(&model)]);
        let mut extract = vec![
            "--config",
            s(&cfg),
            "extract",
            "--cooc",
            s(&cooc),
            "--vocab",
            s(&vocab),
            "--model",
            s(&model),
            "--seeds",
            "#metoo,#timesup",
            "--state-out",
            s(&state),
            "--round",
            &r,
        ];
        if round > 1 {
            extract.extend(["--keywords", s(&state)]);
        }
        ok(&extract);
    }

    let auto = read_history(p("auto.jsonl")).unwrap();
    let auto_sim = read_history(p("auto_sim.jsonl")).unwrap();
    let manual = read_history(&state).unwrap();
    assert_eq!(auto.len(), 3);
    assert_eq!(manual.len(), 3);
    for ((a, m), b) in auto.iter().zip(&manual).zip(&auto_sim) {
        assert_eq!(a.round, m.round);
        assert_eq!(a.keyword_set(30).unwrap(), m.keyword_set(30).unwrap(), "round {}", a.round);
        assert_eq!(a.vocab_size, m.vocab_size);
        assert_eq!(a, b, "file and simulated collectors disagree in round {}", a.round);
    }
}
