//! End-to-end smoke tests for the binary: the full pipeline on a small
//! synthetic corpus, plus the exit-code contract.

use std::path::Path;
use std::process::{Command, Output};

fn mvcode(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvcode"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).to_string()
}

#[test]
fn full_pipeline_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    // synth -> ingest -> bpe-train -> pretrain -> eval
    let out = mvcode(&["synth", "--samples", "12", "--out", "corpus.jsonl", "--seed", "3"], root);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = mvcode(&["ingest", "corpus.jsonl", "--out", "work", "--seed", "3"], root);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("12 paired"), "{text}");
    assert!(root.join("work/views.jsonl").exists());
    assert!(root.join("work/manifest.json").exists());

    let out = mvcode(
        &["bpe-train", "--views", "work/views.jsonl", "--out", "bpe.txt", "--merges", "120"],
        root,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    std::fs::write(
        root.join("tiny.conf"),
        "model.d = 16\nmodel.layers = 1\nmodel.heads = 2\nmodel.ff = 32\n\
         model.max_positions = 256\ntrain.steps = 6\ntrain.batch_n = 4\n",
    )
    .unwrap();
    let out = mvcode(
        &[
            "--config", "tiny.conf", "pretrain", "--views", "work/views.jsonl", "--bpe",
            "bpe.txt", "--out", "run",
        ],
        root,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(root.join("run/model.ckpt").exists());
    assert!(root.join("run/loss_log.jsonl").exists());

    let out = mvcode(
        &[
            "eval", "--checkpoint", "run/model.ckpt", "--views", "work/views.jsonl", "--bpe",
            "bpe.txt", "--pool-size", "12",
        ],
        root,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("MRR"), "{}", stdout(&out));

    let out = mvcode(
        &[
            "eval", "--checkpoint", "run/model.ckpt", "--views", "work/views.jsonl", "--bpe",
            "bpe.txt", "--task", "map",
        ],
        root,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("MAP@R"), "{}", stdout(&out));
}

#[test]
fn views_prints_all_views() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::write(
        root.join("prog.py"),
        "def f(n):\n    total = 0\n    for i in range(n):\n        total = total + i\n    return total\n",
    )
    .unwrap();
    let out = mvcode(&["views", "prog.py"], root);
    assert!(out.status.success());
    let text = stdout(&out);
    for section in ["PL:", "AST:", "CFG:", "PT:"] {
        assert!(text.contains(section), "missing {section} in {text}");
    }
    assert!(text.contains("<blk>"), "{text}");
}

#[test]
fn transform_check_reports_per_program() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let out = mvcode(&["synth", "--samples", "5", "--out", "c.jsonl"], root);
    assert!(out.status.success());
    let out = mvcode(&["transform-check", "c.jsonl"], root);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert_eq!(text.matches("PASS record").count(), 5, "{text}");
    assert!(text.contains("5 passed, 0 failed"));
}

#[test]
fn grad_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = mvcode(&["grad-check", "--samples", "10"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("within 1e-3"));
}

#[test]
fn missing_input_is_io_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = mvcode(&["ingest", "nope.jsonl", "--out", "w"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unparseable_source_is_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::write(root.join("bad.py"), "def broken(:\n").unwrap();
    let out = mvcode(&["views", "bad.py"], root);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn malformed_lines_reported_with_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::write(root.join("c.jsonl"), "{\"code\": \"x = 1\"}\nnot json\n").unwrap();
    let out = mvcode(&["ingest", "c.jsonl", "--out", "w"], root);
    assert!(out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");
}
