use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_cdnerr");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// The single JSON error document on stderr.
fn error_doc(out: &Output) -> serde_json::Value {
    let text = String::from_utf8(out.stderr.clone()).unwrap();
    let line = text.lines().last().expect("stderr has an error line");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("{line}: {e}"))
}

#[test]
fn empty_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.tsv");
    fs::write(&input, "").unwrap();
    for cmd in ["ingest", "run"] {
        let out = run(&[cmd, "--input", p(&input), "--out", p(&dir.path().join(cmd))]);
        assert_eq!(out.status.code(), Some(2), "{cmd}");
        let doc = error_doc(&out);
        assert_eq!(doc["error"]["kind"], "no_parseable_lines");
        assert_eq!(doc["error"]["exit_code"], 2);
    }
}

#[test]
fn small_host_is_excluded_and_run_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("small.tsv");
    let cfg = dir.path().join("run.toml");
    let out_dir = dir.path().join("out");
    assert!(run(&["synth", "--preset", "host3_web_forbidden", "--lines", "800", "--out", p(&log)]).status.success());
    fs::write(&cfg, "[cluster.kmeans]\nn_clusters = 6\n").unwrap();

    let out = run(&["run", "--config", p(&cfg), "--input", p(&log), "--out", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["hosts"].as_array().unwrap().len(), 0);
    assert_eq!(manifest["excluded"][0]["host"], "host3");
    assert_eq!(manifest["excluded"][0]["count"], 800);
    assert_eq!(manifest["excluded"][0]["reason"], "below_threshold");
}

#[test]
fn too_few_rows_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("h.tsv");
    assert!(run(&["synth", "--preset", "host3_web_forbidden", "--out", p(&log)]).status.success());
    let text = fs::read_to_string(&log).unwrap();
    let tiny = dir.path().join("tiny.tsv");
    fs::write(&tiny, text.lines().take(4).collect::<Vec<_>>().join("\n") + "\n").unwrap();

    for algo in ["kmeans", "kmodes"] {
        let out = run(&["cluster", "--records", p(&tiny), "--algo", algo, "--k", "6", "--out", p(&dir.path().join(algo))]);
        assert_eq!(out.status.code(), Some(3), "{algo}");
        assert_eq!(error_doc(&out)["error"]["kind"], "clustering_infeasible");
    }
}

#[test]
fn usage_and_config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_doc(&out)["error"]["kind"], "usage");

    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[cluster]\nno_such_key = 1\n").unwrap();
    let out = run(&["run", "--config", p(&cfg), "--dry-run"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_doc(&out)["error"]["kind"], "config");

    let out = run(&["--threads", "0", "run", "--dry-run"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn dry_run_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let log = dir.path().join("log.tsv");
    for args in [
        vec!["synth", "--preset", "host7_crawler", "--out", p(&log), "--dry-run"],
        vec!["run", "--input", p(&log), "--out", p(&out_dir), "--dry-run"],
        vec!["ingest", "--input", p(&log), "--out", p(&out_dir), "--dry-run"],
    ] {
        let out = run(&args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        serde_json::from_slice::<serde_json::Value>(&out.stdout).expect("dry run prints JSON");
    }
    assert!(!log.exists() && !out_dir.exists());
}

#[test]
fn print_spec_round_trips() {
    let out = run(&["synth", "--preset", "host1_overload", "--print-spec"]);
    assert!(out.status.success());
    let spec = cdnerr::synth::SynthSpec::from_toml(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert_eq!(spec, cdnerr::synth::preset("host1_overload").unwrap());
}
