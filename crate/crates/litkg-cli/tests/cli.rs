//! End-to-end tests for the `litkg` binary: exit codes, override
//! precedence, artifact layout, rerun determinism, and subcommand
//! composition, all against the checked-in fixtures.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_litkg"));
    // Keep ambient state out of the tests: an inherited endpoint override
    // would otherwise poison every offline config below.
    cmd.env_remove("LITKG_ENDPOINT");
    cmd
}

fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .canonicalize()
        .expect("fixtures directory")
}

/// Copies the offline fixture config into `dir` with absolute input paths
/// and trimmed iteration counts so the end-to-end tests stay fast.
fn trimmed_config(dir: &Path) -> PathBuf {
    let fixtures = fixtures_dir();
    let raw = fs::read_to_string(fixtures.join("config_offline.json")).unwrap();
    let mut config: Value = serde_json::from_str(&raw).unwrap();
    for key in [
        "corpus",
        "stopwords",
        "gazetteer",
        "patterns",
        "prompts",
        "judge_verdicts",
        "linkpred_dir",
    ] {
        let rel = config[key].as_str().unwrap().to_string();
        config[key] = Value::String(fixtures.join(rel).display().to_string());
    }
    config["lda"]["iterations"] = Value::from(50);
    config["model"]["epochs"] = Value::from(200);
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("exit code")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn run_pipeline_into(config_path: &Path, out: &Path) -> Output {
    bin().args(["run", "--config"]).arg(config_path).arg("--out").arg(out).output().unwrap()
}

#[test]
fn help_exits_zero() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("Usage"));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(code(&out), 1);
}

#[test]
fn missing_config_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = bin().arg("run").arg("--out").arg(dir.path().join("run")).output().unwrap();
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("--config"), "{}", stderr(&out));
}

#[test]
fn unreadable_config_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(dir.path().join("absent.json"))
        .arg("--out")
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("cannot read config"), "{}", stderr(&out));
}

#[test]
fn offline_config_rejects_a_configured_endpoint() {
    let dir = TempDir::new().unwrap();
    let config_path = trimmed_config(dir.path());
    let mut config: Value =
        serde_json::from_str(&fs::read_to_string(&config_path).unwrap()).unwrap();
    config["endpoint"] = Value::String("https://invalid.example/v1".into());
    fs::write(&config_path, serde_json::to_string(&config).unwrap()).unwrap();
    let out = bin()
        .args(["ingest", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("offline"), "{}", stderr(&out));
}

#[test]
fn offline_flag_overrides_a_permissive_config() {
    let dir = TempDir::new().unwrap();
    let config_path = trimmed_config(dir.path());
    let mut config: Value =
        serde_json::from_str(&fs::read_to_string(&config_path).unwrap()).unwrap();
    config["endpoint"] = Value::String("https://invalid.example/v1".into());
    config["offline"] = Value::Bool(false);
    fs::write(&config_path, serde_json::to_string(&config).unwrap()).unwrap();
    // The file alone is valid: a configured endpoint is allowed when the
    // config is not offline (the deterministic extractor never dials it).
    let ok = bin()
        .args(["ingest", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));
    // --offline must flip the same config into a usage error.
    let out = bin()
        .args(["ingest", "--offline", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(dir.path().join("run2"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("offline"), "{}", stderr(&out));
}

#[test]
fn endpoint_env_override_lands_before_validation() {
    let dir = TempDir::new().unwrap();
    let config_path = trimmed_config(dir.path());
    // The fixture config is offline with no endpoint; the environment
    // override must be injected before the offline guard runs.
    let out = bin()
        .args(["ingest", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(dir.path().join("run"))
        .env("LITKG_ENDPOINT", "https://invalid.example/v1")
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("offline"), "{}", stderr(&out));
    // An empty override is ignored.
    let ok = bin()
        .args(["ingest", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(dir.path().join("run2"))
        .env("LITKG_ENDPOINT", "")
        .output()
        .unwrap();
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));
}

#[test]
fn run_writes_artifacts_and_reruns_byte_identically() {
    let dir = TempDir::new().unwrap();
    let config_path = trimmed_config(dir.path());
    let run0 = dir.path().join("run0");
    let run1 = dir.path().join("run1");

    let out0 = run_pipeline_into(&config_path, &run0);
    assert_eq!(code(&out0), 0, "{}", stderr(&out0));
    let text = stdout(&out0);
    for needle in [
        "ingest\tcompleted",
        "graph\tcompleted",
        "linkpred\tcompleted",
        "config-hash\t",
        "run directory\t",
    ] {
        assert!(text.contains(needle), "missing {needle:?} in:\n{text}");
    }
    for artifact in [
        "run_manifest.json",
        "corpus.jsonl",
        "corpus_stats.json",
        "cleaned.jsonl",
        "mentions.jsonl",
        "candidates.jsonl",
        "joint.tsv",
        "log_joint.tsv",
        "em_weights.tsv",
        "graph.graphml",
        "graph.jsonl",
        "graph.tsv",
        "graph_stats.json",
        "eval_report.txt",
        "linkpred_report.tsv",
    ] {
        assert!(run0.join(artifact).exists(), "missing artifact {artifact}");
    }

    let out1 = run_pipeline_into(&config_path, &run1);
    assert_eq!(code(&out1), 0, "{}", stderr(&out1));
    for artifact in [
        "run_manifest.json",
        "em_weights.tsv",
        "graph.graphml",
        "graph_stats.json",
        "eval_report.txt",
        "linkpred_report.tsv",
    ] {
        let a = fs::read(run0.join(artifact)).unwrap();
        let b = fs::read(run1.join(artifact)).unwrap();
        assert_eq!(a, b, "{artifact} differs between identical runs");
    }

    // The printed hash is the library's digest of the same effective
    // config, and reseeding moves it.
    let config = litkg::pipeline::load_config(&config_path).unwrap();
    assert!(text.contains(&format!("config-hash\t{}", config.digest())), "{text}");
    let mut reseeded = config.clone();
    reseeded.seed = 1;
    assert_ne!(config.digest(), reseeded.digest());

    // --seed plumbs through to the stage reports.
    let out_seeded = bin()
        .args(["linkpred", "--seed", "1", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(&run1)
        .output()
        .unwrap();
    assert_eq!(code(&out_seeded), 0, "{}", stderr(&out_seeded));
    let report = fs::read_to_string(run1.join("linkpred_report.tsv")).unwrap();
    assert!(report.contains("# seed: 1"), "{report}");
}

#[test]
fn staged_subcommands_compose_to_the_full_run_graph() {
    let dir = TempDir::new().unwrap();
    let config_path = trimmed_config(dir.path());
    let full = dir.path().join("full");
    let out_full = run_pipeline_into(&config_path, &full);
    assert_eq!(code(&out_full), 0, "{}", stderr(&out_full));

    let staged = dir.path().join("staged");
    for sub in ["ingest", "extract", "fit-lda", "fit-em", "fit-cp", "build-graph"] {
        let out = bin()
            .args([sub, "--config"])
            .arg(&config_path)
            .arg("--out")
            .arg(&staged)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "{sub}: {}", stderr(&out));
    }
    for artifact in ["graph.graphml", "graph.jsonl", "graph.tsv", "graph_stats.json"] {
        let a = fs::read(full.join(artifact)).unwrap();
        let b = fs::read(staged.join(artifact)).unwrap();
        assert_eq!(a, b, "{artifact} differs between staged and full runs");
    }
}

#[test]
fn eval_before_build_graph_is_a_stage_failure() {
    let dir = TempDir::new().unwrap();
    let config_path = trimmed_config(dir.path());
    let out = bin()
        .args(["eval", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(dir.path().join("empty"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("graph.jsonl"), "{}", stderr(&out));
}

#[test]
fn export_matches_run_artifacts_and_rejects_unknown_formats() {
    let dir = TempDir::new().unwrap();
    let config_path = trimmed_config(dir.path());
    let run = dir.path().join("run");
    let out = run_pipeline_into(&config_path, &run);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let dest = dir.path().join("exported.tsv");
    let out_tsv = bin()
        .args(["export", "--format", "tsv", "--dest"])
        .arg(&dest)
        .arg("--out")
        .arg(&run)
        .output()
        .unwrap();
    assert_eq!(code(&out_tsv), 0, "{}", stderr(&out_tsv));
    assert!(stdout(&out_tsv).starts_with("wrote\t"), "{}", stdout(&out_tsv));
    assert_eq!(fs::read(&dest).unwrap(), fs::read(run.join("graph.tsv")).unwrap());

    // Without --dest the serialized graph goes to stdout, byte for byte.
    let out_jsonl =
        bin().args(["export", "--format", "jsonl"]).arg("--out").arg(&run).output().unwrap();
    assert_eq!(code(&out_jsonl), 0, "{}", stderr(&out_jsonl));
    assert_eq!(out_jsonl.stdout, fs::read(run.join("graph.jsonl")).unwrap());

    let bad = bin().args(["export", "--format", "dot"]).arg("--out").arg(&run).output().unwrap();
    assert_eq!(code(&bad), 1);

    // Exporting from a directory without a built graph is a stage failure.
    let empty = bin().args(["export"]).arg("--out").arg(dir.path().join("empty")).output().unwrap();
    assert_eq!(code(&empty), 2);
    assert!(stderr(&empty).contains("graph.jsonl"), "{}", stderr(&empty));
}
