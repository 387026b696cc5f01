use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use unirag::config::RunConfig;

const SMALL: &str = r#"
iterations = 10
warmup = 2
[corpus]
num_documents = 600
dimension = 16
[freshness]
writes = 50
base_documents = 200
[leakage]
queries = 100
"#;

fn unirag(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unirag"))
        .args(args)
        .current_dir(dir)
        .env_remove("UNIRAG_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn config_prints_the_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let o = unirag(&["config"], dir.path());
    assert!(o.status.success());
    let cfg = RunConfig::from_toml(&stdout(&o)).unwrap();
    assert_eq!(cfg, RunConfig::default().with_derived_seeds());
}

#[test]
fn generate_is_deterministic_and_summarised() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    let a = unirag(
        &["generate", "--config", "small.toml", "--out", "a.jsonl"],
        dir.path(),
    );
    let b = unirag(
        &["generate", "--config", "small.toml", "--out", "b.jsonl"],
        dir.path(),
    );
    assert!(a.status.success(), "{}", stderr(&a));
    assert!(b.status.success());
    let (fa, fb) = (
        fs::read(dir.path().join("a.jsonl")).unwrap(),
        fs::read(dir.path().join("b.jsonl")).unwrap(),
    );
    assert_eq!(fa, fb);
    assert_eq!(fa.iter().filter(|&&c| c == b'\n').count(), 600);
    let out = stdout(&a);
    assert!(out.contains("600 documents"));
    assert!(out.contains("tenant-19: 30"), "{out}");
}

#[test]
fn verify_passes_on_a_generated_corpus() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    assert!(unirag(
        &["generate", "--config", "small.toml", "--out", "c.jsonl"],
        dir.path()
    )
    .status
    .success());
    let o = unirag(
        &["verify", "--corpus", "c.jsonl", "--queries", "80"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("0 violations"), "{out}");
    assert!(out.trim_end().ends_with("PASS"));
}

#[test]
fn verify_exits_2_below_the_recall_floor() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("u.toml"),
        "[corpus]\nnum_documents = 5000\n[corpus.embedding]\nkind = \"uniform\"\n",
    )
    .unwrap();
    assert!(unirag(
        &["generate", "--config", "u.toml", "--out", "u.jsonl"],
        dir.path()
    )
    .status
    .success());
    let o = unirag(
        &[
            "verify",
            "--corpus",
            "u.jsonl",
            "--ef",
            "1",
            "--queries",
            "40",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    assert!(stdout(&o).contains("0 violations"));
    assert!(stderr(&o).contains("verification failed"));
}

#[test]
fn bad_corpus_lines_are_reported_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.jsonl"), "{\"id\": 1}\n").unwrap();
    let o = unirag(&["verify", "--corpus", "bad.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("corpus line 1"), "{}", stderr(&o));

    let o = unirag(&["verify", "--corpus", "missing.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing.jsonl"));
}

#[test]
fn bench_writes_both_reports() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("small.toml"),
        format!("output_dir = \"out\"\n{SMALL}"),
    )
    .unwrap();
    let o = unirag(&["bench", "--config", "small.toml"], dir.path());
    // A tiny corpus can legitimately trip the crossover invariant.
    assert!(matches!(o.status.code(), Some(0 | 2)), "{}", stderr(&o));
    let md = fs::read_to_string(dir.path().join("out/report.md")).unwrap();
    let csv = fs::read_to_string(dir.path().join("out/report.csv")).unwrap();
    assert_eq!(stdout(&o), md);
    for heading in [
        "## Query latency",
        "## Data freshness",
        "## Tenant isolation",
    ] {
        assert!(md.contains(heading), "{heading}");
    }
    assert!(
        md.contains("| Inconsistency window | 3.540ms | 0.000ms |"),
        "{md}"
    );
    assert!(csv.starts_with("suite,stack,metric,value,unit\n"));
}

#[test]
fn bench_suite_flag_and_output_override() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_unirag"))
        .args(["bench", "--config", "small.toml", "--suite", "leakage"])
        .current_dir(dir.path())
        .env("UNIRAG_OUTPUT_DIR", "elsewhere")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let md = fs::read_to_string(dir.path().join("elsewhere/report.md")).unwrap();
    assert!(md.contains("_not run_"));
    assert!(md.contains("Leakage rate (100 queries)"));
    assert!(!dir.path().join("bench-out").exists());
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        unirag(&["bench", "--bogus"], dir.path()).status.code(),
        Some(1)
    );
    assert_eq!(unirag(&[], dir.path()).status.code(), Some(1));
    assert_eq!(unirag(&["--help"], dir.path()).status.code(), Some(0));
    assert_eq!(unirag(&["--version"], dir.path()).status.code(), Some(0));

    fs::write(dir.path().join("bad.toml"), "iterations = 0\n").unwrap();
    let o = unirag(&["bench", "--config", "bad.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("invalid config"));
    let o = unirag(&["bench", "--config", "nope.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}
