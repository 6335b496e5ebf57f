use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn volret(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_volret"))
        .args(args)
        .env_remove("VOLRET_THREADS")
        .output()
        .expect("spawn volret")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, scale: usize) -> PathBuf {
    let out = dir.join("corpus.vemb");
    ok(&volret(&[
        "synth",
        "--scale",
        &scale.to_string(),
        "--seed",
        "3",
        "--out",
        s(&out),
    ]));
    out
}

fn write_config(dir: &Path, embeddings: &Path, extra: &str) -> PathBuf {
    let path = dir.join("run.json");
    let text = format!(
        r#"{{"embeddings": "{}", "output_dir": "out", "seeds": [0], "index": {{"exact": true}}{extra}}}"#,
        embeddings.file_name().unwrap().to_str().unwrap()
    );
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn ingest_prints_task_rows_and_total() {
    let dir = tempfile::tempdir().unwrap();
    let emb = synth(dir.path(), 10);
    let text = ok(&volret(&["ingest", "--embeddings", s(&emb)]));
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split_whitespace().collect()).collect();
    let body: Vec<&Vec<&str>> = rows
        .iter()
        .filter(|r| ["colon", "liver", "lung", "pancreas"].contains(&r[0]))
        .collect();
    assert_eq!(body.len(), 4);
    let total = rows.iter().find(|r| r[0] == "total").unwrap();
    for col in 1..=2 {
        let sum: usize = body.iter().map(|r| r[col].parse::<usize>().unwrap()).sum();
        assert_eq!(total[col].parse::<usize>().unwrap(), sum);
    }
    assert!(text.contains("dimension 32"));

    let json: serde_json::Value =
        serde_json::from_str(&ok(&volret(&["ingest", "--embeddings", s(&emb), "--json"]))).unwrap();
    assert!(json.is_object());
}

#[test]
fn missing_metadata_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let emb = synth(dir.path(), 20);
    std::fs::remove_file(dir.path().join("corpus.meta.jsonl")).unwrap();
    let out = volret(&["ingest", "--embeddings", s(&emb)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.vemb");
    let b = dir.path().join("b.vemb");
    for p in [&a, &b] {
        ok(&volret(&["synth", "--scale", "20", "--seed", "9", "--out", s(p)]));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(
        std::fs::read(dir.path().join("a.meta.jsonl")).unwrap(),
        std::fs::read(dir.path().join("b.meta.jsonl")).unwrap()
    );
}

#[test]
fn invalid_synth_spec_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, r#"{"min_slices": 30, "max_slices": 10}"#).unwrap();
    let out = volret(&["synth", "--spec", s(&spec), "--out", s(&dir.path().join("x.vemb"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_writes_outputs_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let emb = synth(dir.path(), 10);
    let config = write_config(dir.path(), &emb, "");
    let stdout = ok(&volret(&["run", "--config", s(&config)]));
    assert!(stdout.contains("count_base"));

    let out = dir.path().join("out");
    for f in [
        "metrics.csv",
        "per_seed.csv",
        "wilcoxon.csv",
        "summary.txt",
        "run_config.json",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let plans: Vec<_> = std::fs::read_dir(out.join("plans")).unwrap().collect();
    assert_eq!(plans.len(), 4 * 2 + 1);
    assert!(out.join("plans/organ_agnostic_all_seed0.json").is_file());
    assert!(out.join("ranked/organ_specific_seg_liver_seed0.csv").is_file());

    let snapshot = |root: &Path| {
        let mut files = Vec::new();
        for sub in ["plans", "ranked"] {
            let mut names: Vec<_> = std::fs::read_dir(root.join(sub))
                .unwrap()
                .map(|e| e.unwrap().path())
                .collect();
            names.sort();
            files.extend(names);
        }
        for f in ["metrics.csv", "per_seed.csv", "wilcoxon.csv", "summary.txt"] {
            files.push(root.join(f));
        }
        files.iter().map(|p| std::fs::read(p).unwrap()).collect::<Vec<_>>()
    };
    let first = snapshot(&out);
    let again = dir.path().join("again");
    ok(&volret(&["run", "--config", s(&config), "--output-dir", s(&again)]));
    assert_eq!(first, snapshot(&again));
}

#[test]
fn method_override_limits_rows() {
    let dir = tempfile::tempdir().unwrap();
    let emb = synth(dir.path(), 10);
    let config = write_config(dir.path(), &emb, "");
    ok(&volret(&[
        "run",
        "--config",
        s(&config),
        "--methods",
        "count_base",
        "--modes",
        "organ_specific_seg",
        "--organs",
        "colon",
    ]));
    let csv = std::fs::read_to_string(dir.path().join("out/metrics.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    for r in rows {
        let cols: Vec<&str> = r.split(',').collect();
        assert_eq!(cols[0], "organ_specific_seg");
        assert_eq!(cols[2], "count_base");
    }
}

#[test]
fn rerank_and_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let emb = synth(dir.path(), 10);
    let config = write_config(dir.path(), &emb, "");
    ok(&volret(&[
        "run",
        "--config",
        s(&config),
        "--modes",
        "organ_specific_seg",
        "--organs",
        "lung",
    ]));
    let out = dir.path().join("out");
    let plan = out.join("plans/organ_specific_seg_lung_seed0.json");
    let ranked = out.join("ranked/organ_specific_seg_lung_seed0.csv");

    let reranked = dir.path().join("cmir.csv");
    ok(&volret(&[
        "rerank",
        "--embeddings",
        s(&emb),
        "--candidates",
        s(&ranked),
        "--out",
        s(&reranked),
    ]));
    let text = std::fs::read_to_string(&reranked).unwrap();
    assert!(text.lines().skip(1).all(|l| l.ends_with(",cmir")));

    let eval_dir = dir.path().join("eval");
    ok(&volret(&[
        "evaluate",
        "--embeddings",
        s(&emb),
        "--plan",
        s(&plan),
        "--ranked",
        s(&ranked),
        "--output-dir",
        s(&eval_dir),
    ]));
    assert_eq!(
        std::fs::read(eval_dir.join("metrics.csv")).unwrap(),
        std::fs::read(out.join("metrics.csv")).unwrap()
    );
}

#[test]
fn invalid_thread_count_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let emb = synth(dir.path(), 20);
    let out = Command::new(env!("CARGO_BIN_EXE_volret"))
        .args(["ingest", "--embeddings", s(&emb)])
        .env("VOLRET_THREADS", "lots")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_subcommand_exits_two() {
    assert_eq!(volret(&["frobnicate"]).status.code(), Some(2));
}
