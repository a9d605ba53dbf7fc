use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/corpus")
}

fn cgvm(args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cgvm"));
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("CGVM_")) {
        cmd.env_remove(k);
    }
    cmd.args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("terminated by signal")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn copy_corpus(to: &Path) {
    for entry in walk(&fixtures()) {
        let rel = entry.strip_prefix(fixtures()).unwrap();
        let dest = to.join(rel);
        std::fs::create_dir_all(dest.parent().unwrap()).unwrap();
        std::fs::copy(&entry, dest).unwrap();
    }
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn validate_exit_codes() {
    assert_eq!(code(&cgvm(&["validate", path(&fixtures())])), 0);

    let tmp = tempfile::tempdir().unwrap();
    copy_corpus(tmp.path());
    std::fs::remove_file(tmp.path().join("images/nature-1.png")).unwrap();
    let o = cgvm(&["validate", path(tmp.path())]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nature-1"));

    std::fs::write(tmp.path().join("manifest.json"), "{ not json").unwrap();
    assert_eq!(code(&cgvm(&["validate", path(tmp.path())])), 1);
}

#[test]
fn stats_writes_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let o = cgvm(&["stats", path(&fixtures()), "--out", path(tmp.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["conversation_lengths.csv", "sources.csv", "elements.csv"] {
        assert!(tmp.path().join(f).is_file(), "{f} missing");
    }
}

#[test]
fn offline_eval_with_embedding_store() {
    let tmp = tempfile::tempdir().unwrap();
    let run = fixtures().join("runs/fixture");
    let embeddings = fixtures().join("embeddings.txt");
    let o = cgvm(&[
        "--offline",
        "eval",
        path(&fixtures()),
        "--run-dir",
        path(&run),
        "--metrics",
        "psnr,clip,ep,iou",
        "--embeddings",
        path(&embeddings),
        "--out",
        path(tmp.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let agg: Value = serde_json::from_slice(&std::fs::read(tmp.path().join("aggregate.json")).unwrap()).unwrap();
    let metrics: Vec<&str> = agg["corpus"]["rows"].as_array().unwrap().iter().map(|r| r["metric"].as_str().unwrap()).collect();
    assert!(metrics.contains(&"clip_score") && metrics.contains(&"ep_f1"), "{metrics:?}");
    assert_eq!(agg["table"].as_array().unwrap().len(), 3);
    let errors: Value = serde_json::from_slice(&std::fs::read(tmp.path().join("errors.json")).unwrap()).unwrap();
    assert_eq!(errors.as_array().unwrap().len(), 0);
}

#[test]
fn clip_without_store_is_partial_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let run = fixtures().join("runs/fixture");
    let o = cgvm(&["eval", path(&fixtures()), "--run-dir", path(&run), "--metrics", "psnr,clip", "--out", path(tmp.path())]);
    assert_eq!(code(&o), 2);
    let errors: Value = serde_json::from_slice(&std::fs::read(tmp.path().join("errors.json")).unwrap()).unwrap();
    let errors = errors.as_array().unwrap();
    assert_eq!(errors.len(), 36);
    assert!(errors.iter().all(|e| e["kind"] == "EmbeddingMissing" && e["metric"] == "clip"));
}

#[test]
fn offline_rejects_configured_endpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_cgvm"))
        .args(["--offline", "summarize", path(&fixtures()), "--run-dir", path(&tmp.path().join("run"))])
        .env("CGVM_LLM_URL", "http://127.0.0.1:9/v1")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("CGVM_LLM_URL"));
    assert!(!tmp.path().join("run").exists());
}

#[test]
fn help_lists_options() {
    let o = cgvm(&["eval", "--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for flag in ["--metrics", "--side", "--grid", "--ssim-window", "--iou-matching", "--embeddings", "--literal-paper-formulas", "--offline"] {
        assert!(text.contains(flag), "{flag} not in help");
    }
}

#[test]
fn unknown_metric_is_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let run = fixtures().join("runs/fixture");
    let o = cgvm(&["eval", path(&fixtures()), "--run-dir", path(&run), "--metrics", "psnr,lpips", "--out", path(tmp.path())]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("lpips"));
}

#[test]
fn report_refuses_mismatched_snapshots() {
    let tmp = tempfile::tempdir().unwrap();
    let run = fixtures().join("runs/fixture");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for (out, side) in [(&a, "128"), (&b, "64")] {
        let o = cgvm(&["eval", path(&fixtures()), "--run-dir", path(&run), "--metrics", "psnr", "--side", side, "--out", path(out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(code(&cgvm(&["report", path(&a), path(&b), "--out", path(&tmp.path().join("m"))])), 1);
    // The same report twice duplicates every sample.
    assert_eq!(code(&cgvm(&["report", path(&a), path(&a), "--out", path(&tmp.path().join("m"))])), 1);
}
