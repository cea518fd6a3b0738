use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_iod");

fn iod(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .env("IOD_MOCK", "1")
        .env_remove("IOD_LLM_ENDPOINT")
        .env_remove("IOD_WORKSPACE")
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = iod(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}\n{}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Small synthetic corpus, ingested and indexed into `./.iod`.
fn fixture() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(
        p,
        &[
            "gen-synthetic",
            "syn",
            "--seed",
            "42",
            "--domains",
            "2",
            "--docs",
            "4",
            "--questions",
            "4",
        ],
    );
    for d in ["materials", "medicine"] {
        ok(p, &["ingest", &format!("syn/corpus/{d}"), "--domain", d]);
    }
    ok(p, &["index"]);
    dir
}

fn first_question(p: &Path, task: u8) -> String {
    let line = std::fs::read_to_string(p.join(format!("syn/task{task}.jsonl"))).unwrap();
    let v: serde_json::Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
    v["question"].as_str().unwrap().to_string()
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(iod(dir.path(), &[]).status.code(), Some(1));
    assert_eq!(iod(dir.path(), &["--bogus"]).status.code(), Some(1));
    assert_eq!(iod(dir.path(), &["search"]).status.code(), Some(1));
    assert_eq!(
        iod(dir.path(), &["search", "x", "--tier", "atom"]).status.code(),
        Some(1)
    );
    assert_eq!(iod(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = iod(dir.path(), &["search", "anything"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
    assert_eq!(
        iod(dir.path(), &["--config", "missing.toml", "index"]).status.code(),
        Some(2)
    );
    std::fs::write(dir.path().join("bad.toml"), "colour = 'red'\n").unwrap();
    assert_eq!(
        iod(dir.path(), &["--config", "bad.toml", "index"]).status.code(),
        Some(2)
    );
}

#[test]
fn search_prints_k_pid_score_lines() {
    let dir = fixture();
    let p = dir.path();
    let q = first_question(p, 1);
    let out = ok(
        p,
        &["search", &q, "--tier", "object", "--strategy", "hybrid", "--k", "5"],
    );
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 5, "{out}");
    for l in &lines {
        let (pid, score) = l.split_once('\t').unwrap();
        assert!(pid.starts_with("iod:") && !pid.contains('.'), "{pid}");
        score.parse::<f64>().unwrap();
    }
    let chunks = ok(p, &["search", &q, "-k", "2"]);
    assert_eq!(chunks.lines().count(), 2);
    assert!(chunks.lines().all(|l| l.split('\t').next().unwrap().contains('.')));
}

#[test]
fn stdout_is_deterministic() {
    let dir = fixture();
    let p = dir.path();
    let q = first_question(p, 2);
    for args in [
        vec!["search", q.as_str(), "--k", "4"],
        vec!["ask", q.as_str()],
        vec!["bench", "1", "syn/task1.jsonl"],
    ] {
        assert_eq!(ok(p, &args), ok(p, &args), "{args:?}");
    }
}

#[test]
fn ask_report_and_clarification() {
    let dir = fixture();
    let p = dir.path();
    let answer = ok(p, &["ask", &first_question(p, 2)]);
    assert!(answer.starts_with("# "), "{answer}");
    assert!(answer.contains("## References"));
    let report = ok(p, &["report", "materials phase properties"]);
    assert!(report.contains("[1]"), "{report}");
    let clar = ok(p, &["ask", "tell me more"]);
    assert!(clar.starts_with("Clarification needed:"), "{clar}");
    assert!(p.join(".iod/sessions").is_dir());
}

#[test]
fn bench_prints_metric_tables_and_writes_reports() {
    let dir = fixture();
    let p = dir.path();
    let t1 = ok(p, &["bench", "1", "syn/task1.jsonl", "--out", "out/t1"]);
    assert!(t1.starts_with("| id | precision | recall | f1 |"), "{t1}");
    assert!(t1.lines().any(|l| l.starts_with("| mean |")));
    assert!(p.join("out/t1.json").is_file() && p.join("out/t1.md").is_file());
    let t2 = ok(p, &["bench", "2", "syn/task2.jsonl"]);
    assert!(t2.contains("faithfulness"));
    assert_eq!(iod(p, &["bench", "4", "syn/task1.jsonl"]).status.code(), Some(2));
}

#[test]
fn config_file_selects_the_workspace() {
    let dir = fixture();
    let p = dir.path();
    std::fs::write(p.join("iod.toml"), "workspace = \".iod\"\n[gateway]\nmock = true\n").unwrap();
    let out = Command::new(BIN)
        .current_dir(p)
        .env_remove("IOD_MOCK")
        .env_remove("IOD_WORKSPACE")
        .args(["--config", "iod.toml", "-w", ".iod", "search", "phase", "--k", "1"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 1);
}
