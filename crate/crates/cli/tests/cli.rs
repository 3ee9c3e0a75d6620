use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphusion"))
        .args(args)
        .output()
        .unwrap()
}

fn fx(name: &str) -> String {
    fixtures().join(name).to_string_lossy().into_owned()
}

#[test]
fn build_writes_graph_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["build", "--config", &fx("build.toml"), "--out-dir", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["seeds"], 8);
    assert_eq!(report["extraction"]["skipped"], 1);
    assert_eq!(report["extraction"]["malformed"], 2);
    assert_eq!(report["extraction"]["self_loops"], 1);
    assert!(dir.path().join("llm_calls.jsonl").exists());
}

#[test]
fn extract_then_fuse_matches_build() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["extract", "--config", &fx("build.toml"), "--out-dir", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&["fuse", "--config", &fx("build.toml"), "--out-dir", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read(dir.path().join("kg.jsonl")).unwrap(),
        fs::read(fixtures().join("golden/kg.jsonl")).unwrap()
    );
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[pipeline]\nk_contxt = 3\n").unwrap();
    let o = run(&[
        "kg",
        "inspect",
        &fx("golden/kg.jsonl"),
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("k_contxt"));
}

#[test]
fn missing_input_names_config_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[paths]\ncorpus = \"nowhere.jsonl\"\n").unwrap();
    let o = run(&["ingest", "--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("paths.corpus"));
}

#[test]
fn inspect_table_lists_every_relation() {
    let o = run(&["kg", "inspect", &fx("golden/kg.jsonl")]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    for r in [
        "Compare",
        "Part-of",
        "Conjunction",
        "Evaluate-for",
        "Is-a-Prerequisite-of",
        "Used-for",
        "Hyponym-Of",
    ] {
        assert!(text.contains(r), "{r} missing from\n{text}");
    }
    assert!(text.contains("conflicts  0"));
}

#[test]
fn linkpred_prediction_count_mismatch_fails() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = dir.path().join("pairs.tsv");
    let preds = dir.path().join("preds.txt");
    fs::write(&pairs, "a\tb\t1\nc\td\t0\ne\tf\t1\n").unwrap();
    fs::write(&preds, "1\n0\n").unwrap();
    let o = run(&[
        "linkpred",
        "--data",
        pairs.to_str().unwrap(),
        "--predictions",
        preds.to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("has 2 predictions for 3 pairs"));

    fs::write(&preds, "1\n0\n0\n").unwrap();
    let o = run(&[
        "linkpred",
        "--data",
        pairs.to_str().unwrap(),
        "--predictions",
        preds.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["metrics"]["accuracy"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn qa_task6_defaults_output_next_to_rubric() {
    let dir = tempfile::tempdir().unwrap();
    let qa = fixtures().join("tutorqa");
    let o = run(&[
        "qa",
        "--task",
        "T6",
        "--data",
        qa.join("t6.jsonl").to_str().unwrap(),
        "--kg",
        &fx("golden/kg.jsonl"),
        "--transcript",
        qa.join("t6_transcript.jsonl").to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let answers = fs::read_to_string(dir.path().join("task6_answers.jsonl")).unwrap();
    assert_eq!(answers.lines().count(), 10);
    let rubric = fs::read_to_string(dir.path().join("task6_rubric.md")).unwrap();
    assert!(rubric.contains("Factuality"));
}

#[test]
fn eval_ratings_reports_summary_and_agreement() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ratings.csv");
    fs::write(
        &path,
        "item_id,rater_id,concept_rating,relation_rating\n1,r1,3,2\n1,r2,3,2\n2,r1,2,1\n2,r2,3,1\n",
    )
    .unwrap();
    let o = run(&["eval-ratings", "--ratings", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["summary"]["pooled"]["concept"]["mean"], 2.75);
    assert_eq!(v["agreement"]["items"], 2);
}

#[test]
fn seeds_command_writes_one_per_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("seeds.toml");
    fs::write(
        &cfg,
        format!(
            "[paths]\ncorpus = {:?}\n[seeds]\nk = 2\nterms_per_cluster = 3\n",
            fx("toy_corpus.jsonl")
        ),
    )
    .unwrap();
    let out = dir.path().join("seeds.txt");
    let o = run(&[
        "seeds",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let seeds = fs::read_to_string(&out).unwrap();
    assert!((1..=6).contains(&seeds.lines().count()), "{seeds}");
}

#[test]
fn ingest_reports_counts() {
    let o = run(&["ingest", "--corpus", &fx("corpus.jsonl")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["documents"], 20);
}
