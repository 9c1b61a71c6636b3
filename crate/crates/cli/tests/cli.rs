use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mediaprofile::corpus::write_labels_csv;
use mediaprofile::synthetic::{synthetic_outlets, write_fixtures, SyntheticResponder};
use mediaprofile::{Outlet, PromptLibrary, Suite};
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mediaprofile"));
    c.env_remove("OPENAI_API_KEY");
    for (k, _) in std::env::vars() {
        if k.starts_with("MEDIAPROFILE_") {
            c.env_remove(k);
        }
    }
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("spawn")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stderr),
        String::from_utf8_lossy(&out.stdout)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn labels(dir: &TempDir, outlets: &[Outlet]) -> PathBuf {
    let p = dir.path().join("labels.csv");
    write_labels_csv(&p, outlets).unwrap();
    p
}

/// Labels plus a mock-elicited corpus for `n` synthetic outlets.
fn corpus(n: usize) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    labels(&dir, &synthetic_outlets(n, 11));
    ok(
        dir.path(),
        &["elicit", "--labels", "labels.csv", "--out", "corpus.jsonl", "--backend", "mock"],
    );
    dir
}

const QUICK_GRID: [&str; 6] = ["--c-values", "1,10", "--gamma-values", "0.1,1", "--folds", "3"];

#[test]
fn elicit_handcrafted_two_outlets_is_resumable_and_offline() {
    let dir = tempfile::tempdir().unwrap();
    labels(&dir, &synthetic_outlets(2, 1));
    let args = [
        "elicit", "--suite", "handcrafted", "--backend", "mock", "--labels", "labels.csv", "--out",
        "corpus.jsonl",
    ];
    let first = ok(dir.path(), &args);
    assert!(first.contains("36 requests, 0 cache hits"), "{first}");
    let corpus = std::fs::read_to_string(dir.path().join("corpus.jsonl")).unwrap();
    assert_eq!(corpus.lines().count(), 36);

    let second = ok(dir.path(), &args);
    assert!(second.contains("0 requests, 36 cache hits"), "{second}");
    assert_eq!(std::fs::read_to_string(dir.path().join("corpus.jsonl")).unwrap(), corpus);

    let m = json(dir.path().join("corpus.jsonl.manifest.json"));
    assert_eq!(m["command"], "elicit");
    assert_eq!(m["network_requests"], 0);
    assert!(m["input_hashes"]["labels.csv"].is_string());
    assert_eq!(m["config_snapshot"]["settings"]["backend"]["kind"], "mock");
}

#[test]
fn real_backend_without_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    labels(&dir, &synthetic_outlets(2, 1));
    let out = run(dir.path(), &["elicit", "--labels", "labels.csv", "--out", "c.jsonl"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("OPENAI_API_KEY"));
}

#[test]
fn fixture_directory_backend() {
    let dir = tempfile::tempdir().unwrap();
    let outlets = synthetic_outlets(3, 2);
    labels(&dir, &outlets);
    let fixtures = dir.path().join("fixtures");
    let responder = SyntheticResponder::new(&outlets, 2);
    let n = write_fixtures(&fixtures, PromptLibrary::bundled(), &outlets[..2], Suite::Systematic, &responder)
        .unwrap();
    assert_eq!(n, 32);

    let base = ["elicit", "--suite", "systematic", "--backend", "mock", "--fixtures", "fixtures"];
    let mut args = base.to_vec();
    args.extend(["--labels", "labels.csv", "--limit", "2", "--out", "a.jsonl"]);
    ok(dir.path(), &args);
    assert_eq!(std::fs::read_to_string(dir.path().join("a.jsonl")).unwrap().lines().count(), 32);

    // the third outlet has no fixtures
    let mut args = base.to_vec();
    args.extend(["--labels", "labels.csv", "--out", "b.jsonl"]);
    assert_eq!(code(&run(dir.path(), &args)), 4);

    let mut args = base.to_vec();
    args[6] = "nowhere";
    args.extend(["--labels", "labels.csv", "--out", "c.jsonl"]);
    assert_eq!(code(&run(dir.path(), &args)), 3);
}

#[test]
fn train_beats_majority_and_is_deterministic() {
    let dir = corpus(60);
    let mut args = vec!["train", "--labels", "labels.csv", "--corpus", "corpus.jsonl", "--out", "m1"];
    args.extend(QUICK_GRID);
    let table = ok(dir.path(), &args);
    assert!(table.contains("\nSystem"), "{table}");
    args[6] = "m2";
    ok(dir.path(), &args);

    let read = |d: &str, f: &str| std::fs::read(dir.path().join(d).join(f)).unwrap();
    assert_eq!(read("m1", "model.json"), read("m2", "model.json"));
    assert_eq!(read("m1", "report.json"), read("m2", "report.json"));

    let reports = json(dir.path().join("m1/report.json"));
    let (svm, majority) = (&reports[0], &reports[1]);
    assert_eq!(svm["system"], "SVM");
    assert!(svm["accuracy"].as_f64().unwrap() > majority["accuracy"].as_f64().unwrap());
    let split = json(dir.path().join("m1/split.json"));
    assert_eq!(split["test"].as_array().unwrap().len(), svm["n"].as_u64().unwrap() as usize);
    assert_eq!(json(dir.path().join("m1/manifest.json"))["network_requests"], 0);

    // reuse the saved split under a different seed: same membership, same model
    args[6] = "m3";
    args.extend(["--split", "m1/split.json", "--seed", "42"]);
    ok(dir.path(), &args);
    assert_eq!(read("m1", "split.json"), read("m3", "split.json"));
}

#[test]
fn seed_changes_the_split() {
    let dir = corpus(30);
    let mut args = vec!["train", "--labels", "labels.csv", "--corpus", "corpus.jsonl", "--out", "a"];
    args.extend(QUICK_GRID);
    ok(dir.path(), &args);
    args[6] = "b";
    args.extend(["--seed", "7"]);
    ok(dir.path(), &args);
    assert_ne!(json(dir.path().join("a/split.json"))["test"], json(dir.path().join("b/split.json"))["test"]);
    assert_eq!(json(dir.path().join("b/split.json"))["seed"], 7);
}

#[test]
fn too_few_examples_exit_5() {
    let dir = corpus(8);
    let out = run(
        dir.path(),
        &["train", "--labels", "labels.csv", "--corpus", "corpus.jsonl", "--out", "m"],
    );
    assert_eq!(code(&out), 5, "{}", String::from_utf8_lossy(&out.stderr));

    std::fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    let out = run(
        dir.path(),
        &["train", "--labels", "labels.csv", "--corpus", "empty.jsonl", "--out", "m"],
    );
    assert_eq!(code(&out), 5);
}

#[test]
fn ablation_writes_three_comparable_reports() {
    let dir = corpus(45);
    let mut args = vec![
        "ablate", "--labels", "labels.csv", "--corpus", "corpus.jsonl", "--task", "bias5", "--out", "abl",
    ];
    args.extend(QUICK_GRID);
    let table = ok(dir.path(), &args);
    for name in ["SVM (leaning)", "SVM (reason)", "SVM (both)", "Majority"] {
        assert!(table.contains(name), "{table}");
    }
    let reports = json(dir.path().join("abl/ablation.json"));
    let reports = reports.as_array().unwrap();
    assert_eq!(reports.len(), 4);
    let n = &reports[0]["n"];
    assert!(reports.iter().all(|r| &r["n"] == n && r["task"] == "bias5"));
}

#[test]
fn export_then_evaluate_external_predictions() {
    let dir = corpus(30);
    ok(
        dir.path(),
        &["export-features", "--labels", "labels.csv", "--corpus", "corpus.jsonl", "--out", "features.jsonl"],
    );
    let text = std::fs::read_to_string(dir.path().join("features.jsonl")).unwrap();
    let records: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 30);
    let test: Vec<&Value> = records.iter().filter(|r| r["split"] == "test").collect();
    let split = json(dir.path().join("features.jsonl.split.json"));
    assert_eq!(test.len(), split["test"].as_array().unwrap().len());

    // an external model that answers "high" for everything, as a JSON array
    let preds: Vec<Value> = test
        .iter()
        .map(|r| serde_json::json!({"domain": r["domain"], "pred": "high"}))
        .collect();
    std::fs::write(dir.path().join("preds.json"), serde_json::to_string(&preds).unwrap()).unwrap();
    let out = ok(
        dir.path(),
        &[
            "evaluate", "--labels", "labels.csv", "--task", "factuality", "--predictions", "preds.json",
            "--split", "features.jsonl.split.json", "--system", "external", "--out", "ext.json",
        ],
    );
    assert!(out.contains("external"), "{out}");
    let report = json(dir.path().join("ext.json"));
    assert_eq!(report["n"], test.len());
    assert_eq!(report["per_class"]["low"]["f1"], 0.0);

    // a saved report renders identically through --report
    let again = ok(dir.path(), &["evaluate", "--report", "ext.json"]);
    assert!(out.starts_with(&again), "{again}\n---\n{out}");
}

#[test]
fn evaluate_needs_something_to_score() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["evaluate"])), 2);
}

#[test]
fn zeroshot_name_reports_both_policies() {
    let dir = tempfile::tempdir().unwrap();
    labels(&dir, &synthetic_outlets(12, 4));
    let out = ok(
        dir.path(),
        &["zeroshot", "--backend", "mock", "--labels", "labels.csv", "--task", "bias3", "--mode", "name", "--out", "zs"],
    );
    assert!(out.contains("12 outlets, 12 requests"), "{out}");
    let reports = json(dir.path().join("zs/report.json"));
    assert_eq!(reports[0]["policy"], "count-wrong");
    assert_eq!(reports[1]["policy"], "exclude");
    let preds = std::fs::read_to_string(dir.path().join("zs/predictions.jsonl")).unwrap();
    let first: Value = serde_json::from_str(preds.lines().next().unwrap()).unwrap();
    assert_eq!(first["votes"].as_array().unwrap().len(), 1);
    assert!(first["final"].is_string());
}

#[test]
fn zeroshot_articles_vote_over_five() {
    let dir = tempfile::tempdir().unwrap();
    let outlets = synthetic_outlets(2, 5);
    labels(&dir, &outlets);
    let outlet_dir = dir.path().join("articles").join(outlets[0].domain.as_str());
    std::fs::create_dir_all(&outlet_dir).unwrap();
    for i in 1..=5 {
        std::fs::write(outlet_dir.join(format!("{i}.txt")), format!("Article number {i} body.")).unwrap();
    }
    ok(
        dir.path(),
        &[
            "zeroshot", "--backend", "mock", "--labels", "labels.csv", "--task", "bias5", "--mode",
            "articles", "--articles", "articles", "--out", "zs",
        ],
    );
    let preds = std::fs::read_to_string(dir.path().join("zs/predictions.jsonl")).unwrap();
    let rows: Vec<Value> = preds.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows[0]["votes"].as_array().unwrap().len(), 5);
    // the second outlet has no articles and abstains
    assert_eq!(rows[1]["final"], "-1");
}

#[test]
fn zeroshot_errors() {
    let dir = tempfile::tempdir().unwrap();
    labels(&dir, &synthetic_outlets(2, 1));
    let base = ["zeroshot", "--backend", "mock", "--labels", "labels.csv", "--out", "zs"];
    let with = |extra: &[&str]| {
        let mut a = base.to_vec();
        a.extend(extra);
        code(&run(dir.path(), &a))
    };
    assert_eq!(with(&["--mode", "telepathy"]), 2);
    assert_eq!(with(&["--mode", "articles"]), 2);
    assert_eq!(with(&["--mode", "articles", "--articles", "missing"]), 3);
}

#[test]
fn analyze_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let outlets = synthetic_outlets(20, 3);
    labels(&dir, &outlets);
    let preds: String = outlets
        .iter()
        .map(|o| format!("{{\"domain\":\"{}\",\"pred\":\"high\"}}\n", o.domain))
        .collect();
    std::fs::write(dir.path().join("preds.jsonl"), preds).unwrap();
    let base = ["analyze", "--labels", "labels.csv", "--predictions", "preds.jsonl"];

    let mut args = base.to_vec();
    args.extend(["--out", "all"]);
    let out = ok(dir.path(), &args);
    assert!(out.contains("US"), "{out}");
    for f in ["popularity.json", "region.json", "scatter.csv", "manifest.json"] {
        assert!(dir.path().join("all").join(f).exists(), "{f}");
    }
    let pop = json(dir.path().join("all/popularity.json"));
    let total: u64 = pop["bins"].as_array().unwrap().iter().map(|b| b["n"].as_u64().unwrap()).sum();
    assert_eq!(total, 20);

    let mut args = base.to_vec();
    args.extend(["--dimension", "region", "--out", "region"]);
    ok(dir.path(), &args);
    assert!(dir.path().join("region/region.json").exists());
    assert!(!dir.path().join("region/popularity.json").exists());

    // labels without ranks: region only, with a warning
    let unranked: Vec<Outlet> = outlets
        .iter()
        .cloned()
        .map(|mut o| {
            o.alexa_rank = None;
            o
        })
        .collect();
    write_labels_csv(dir.path().join("unranked.csv"), &unranked).unwrap();
    let out = run(
        dir.path(),
        &["analyze", "--labels", "unranked.csv", "--predictions", "preds.jsonl", "--out", "nr"],
    );
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no rank metadata"));
    assert!(dir.path().join("nr/region.json").exists());
    assert!(!dir.path().join("nr/popularity.json").exists());

    std::fs::write(dir.path().join("stray.jsonl"), "{\"domain\":\"elsewhere.org\",\"pred\":\"low\"}\n").unwrap();
    let out = run(
        dir.path(),
        &["analyze", "--labels", "labels.csv", "--predictions", "stray.jsonl", "--out", "x"],
    );
    assert_eq!(code(&out), 3);
}

#[test]
fn ingest_normalizes_and_splits() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("raw.csv"),
        "domain,factuality,bias5\nhttps://A.com/,high,left\nb.com,mixed,right-center\nc.com,bogus,left\n",
    )
    .unwrap();
    std::fs::write(dir.path().join("ranks.csv"), "domain,rank\na.com,120\n").unwrap();
    let out = ok(
        dir.path(),
        &["ingest", "--labels", "raw.csv", "--ranks", "ranks.csv", "--out", "clean.csv"],
    );
    assert!(out.contains("2 outlets, 1 rejected rows, 1 ranks"), "{out}");
    let clean = std::fs::read_to_string(dir.path().join("clean.csv")).unwrap();
    assert!(clean.contains("120"), "{clean}");

    labels(&dir, &synthetic_outlets(40, 9));
    ok(
        dir.path(),
        &["ingest", "--labels", "labels.csv", "--out", "l2.csv", "--task", "factuality", "--split-out", "split.json"],
    );
    let split = json(dir.path().join("split.json"));
    assert_eq!(split["train"].as_array().unwrap().len(), 32);
    assert_eq!(split["seed"], 42);

    assert_eq!(code(&run(dir.path(), &["ingest", "--labels", "nope.csv", "--out", "x.csv"])), 3);
}

#[test]
fn configuration_precedence() {
    let dir = tempfile::tempdir().unwrap();
    labels(&dir, &synthetic_outlets(2, 1));
    std::fs::write(dir.path().join("cfg.toml"), "seed = 5\n[backend]\nkind = \"mock\"\n").unwrap();
    let args = ["--config", "cfg.toml", "elicit", "--labels", "labels.csv", "--out", "c.jsonl", "--suite", "handcrafted"];
    let seed = |extra_env: Option<(&str, &str)>, extra: &[&str]| {
        let mut c = bin();
        c.current_dir(dir.path()).args(args).args(extra);
        if let Some((k, v)) = extra_env {
            c.env(k, v);
        }
        assert!(c.output().unwrap().status.success());
        json(dir.path().join("c.jsonl.manifest.json"))["config_snapshot"]["settings"]["seed"].clone()
    };
    assert_eq!(seed(None, &[]), 5);
    assert_eq!(seed(Some(("MEDIAPROFILE_SEED", "9")), &[]), 5);
    assert_eq!(seed(Some(("MEDIAPROFILE_SEED", "9")), &["--seed", "3"]), 3);

    std::fs::write(dir.path().join("bad.toml"), "sede = 1\n").unwrap();
    let out = run(dir.path(), &["--config", "bad.toml", "elicit", "--labels", "labels.csv", "--out", "c.jsonl"]);
    assert_eq!(code(&out), 2);
}
