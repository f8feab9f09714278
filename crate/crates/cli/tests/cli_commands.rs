use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nof1(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nof1"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = nof1(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn generate_writes_one_column_per_variable() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["generate", "--seed", "3", "--out", "g"]);
    let csv = fs::read_to_string(dir.path().join("g/dataset.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(header.split(',').count(), 8);
    assert_eq!(csv.lines().count(), 91);
    assert!(csv.lines().skip(1).all(|l| l.split(',').count() == 8));
    for f in [
        "ground_truth.json",
        "generator_config.json",
        "manifest.json",
    ] {
        assert!(dir.path().join("g").join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("g/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["master_seed"], 3);
    ok(
        dir.path(),
        &["generate", "--seed", "3", "--format", "jsonl", "--out", "j"],
    );
    assert!(dir.path().join("j/dataset.jsonl").exists());
}

#[test]
fn replay_writes_timelines_and_bounded_insights() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["generate", "--out", "g"]);
    ok(dir.path(), &["replay", "g/dataset.csv", "--out", "r"]);
    let timelines = fs::read_dir(dir.path().join("r/timelines"))
        .unwrap()
        .count();
    assert_eq!(timelines, 6);
    let tl = fs::read_to_string(dir.path().join("r/timelines/coffee__anxiety.csv")).unwrap();
    assert_eq!(
        tl.lines().next().unwrap(),
        "day,tier,location,ci_lo,ci_hi,prob_dir,p_value,kl"
    );
    assert_eq!(tl.lines().count(), 91);
    let insights: Vec<serde_json::Value> = serde_json::from_str(
        &fs::read_to_string(dir.path().join("r/insights_day30.json")).unwrap(),
    )
    .unwrap();
    assert!(!insights.is_empty());
    for i in &insights {
        let psi = i["plausibility"]["psi_final"].as_f64().unwrap();
        assert!((0.1..=0.95).contains(&psi), "{psi}");
        assert_ne!(i["tier"], "null");
    }
    ok(
        dir.path(),
        &[
            "replay",
            "g/dataset.csv",
            "--pair",
            "coffee:anxiety",
            "--milestones",
            "10",
            "--out",
            "one",
        ],
    );
    assert_eq!(
        fs::read_dir(dir.path().join("one/timelines"))
            .unwrap()
            .count(),
        1
    );
    assert!(dir.path().join("one/insights_day10.json").exists());
}

#[test]
fn sweep_over_three_kl_values_gives_three_points() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "experiment",
            "sweep",
            "--datasets",
            "1",
            "--grid",
            "kl_threshold=0.05,0.1,0.2",
            "--out",
            "s",
        ],
    );
    let points: Vec<serde_json::Value> =
        serde_json::from_str(&fs::read_to_string(dir.path().join("s/sweep.json")).unwrap())
            .unwrap();
    assert_eq!(points.len(), 3);
    ok(
        dir.path(),
        &["report", "s/sweep.json", "--out", "s/again.md"],
    );
    assert!(fs::read_to_string(dir.path().join("s/again.md"))
        .unwrap()
        .contains("kl_threshold"));
}

#[test]
fn single_experiment_report_roundtrips_to_markdown() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["experiment", "single", "--out", "e"]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("e/report.json")).unwrap())
            .unwrap();
    for key in ["fdr_at_day30", "ci_coverage_day90"] {
        let v = report[key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v), "{key} = {v}");
    }
    assert!(report["mc_summary"].is_null());
    ok(dir.path(), &["report", "e/report.json", "--out", "e/r.md"]);
    assert_eq!(
        fs::read_to_string(dir.path().join("e/r.md")).unwrap(),
        fs::read_to_string(dir.path().join("e/report.md")).unwrap()
    );
}

#[test]
fn bad_inputs_exit_non_zero() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["generate", "--out", "g"]);
    fs::write(dir.path().join("old.json"), r#"{"engine": {}}"#).unwrap();
    fs::write(
        dir.path().join("typo.json"),
        r#"{"schema_version": 1, "engin": {}}"#,
    )
    .unwrap();
    let cases: [&[&str]; 5] = [
        &[
            "replay",
            "g/dataset.csv",
            "--config",
            "missing.json",
            "--out",
            "x",
        ],
        &[
            "replay",
            "g/dataset.csv",
            "--config",
            "old.json",
            "--out",
            "x",
        ],
        &[
            "replay",
            "g/dataset.csv",
            "--config",
            "typo.json",
            "--out",
            "x",
        ],
        &[
            "replay",
            "g/dataset.csv",
            "--pair",
            "coffee:sleep",
            "--out",
            "x",
        ],
        &[
            "experiment",
            "sweep",
            "--grid",
            "prior_shape=1,2",
            "--out",
            "x",
        ],
    ];
    for args in cases {
        let out = nof1(dir.path(), args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(
            String::from_utf8_lossy(&out.stderr).starts_with("error:"),
            "{args:?}"
        );
    }
}
