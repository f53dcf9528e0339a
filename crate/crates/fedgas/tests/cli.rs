//! End-to-end checks of the command-line surface: subcommands, flags, exit
//! codes, and the files each command writes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn fedgas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedgas"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

#[test]
fn gen_data_writes_six_csvs_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data");
    let output = fedgas(&[
        "gen-data",
        "--config",
        &path_str(&scenario_path("default.json")),
        "--out",
        &path_str(&out),
    ]);
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );

    let mut csvs: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().to_string())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    csvs.sort();
    assert_eq!(
        csvs,
        vec![
            "company-a.csv",
            "company-b.csv",
            "station-a1.csv",
            "station-a2.csv",
            "station-b1.csv",
            "station-b2.csv",
        ]
    );
    let manifest = std::fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"scenario\": \"default\""));
    assert!(manifest.contains("station-b2.csv"));
}

#[test]
fn gen_data_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let output = fedgas(&[
            "gen-data",
            "--config",
            &path_str(&scenario_path("default.json")),
            "--out",
            &path_str(out),
        ]);
        assert!(output.status.success());
    }
    for file in ["company-a.csv", "station-b1.csv", "manifest.json"] {
        let a = std::fs::read(out_a.join(file)).unwrap();
        let b = std::fs::read(out_b.join(file)).unwrap();
        assert!(a == b, "{file} differs between reruns");
    }
}

#[test]
fn gen_data_rejects_invalid_spec_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("bad.json");
    let mut config: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(scenario_path("default.json")).unwrap())
            .unwrap();
    config["sources"]["company-a"]["generated"]["days"] = 1.into();
    std::fs::write(&config_path, serde_json::to_string(&config).unwrap()).unwrap();

    let out = dir.path().join("data");
    let output = fedgas(&[
        "gen-data",
        "--config",
        &path_str(&config_path),
        "--out",
        &path_str(&out),
    ]);
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("days"));
    assert!(
        !out.exists(),
        "no output directory may be created on invalid config"
    );
}

#[test]
fn simulate_writes_the_report_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let output = fedgas(&[
        "simulate",
        "--config",
        &path_str(&scenario_path("default.json")),
        "--out",
        &path_str(dir.path()),
    ]);
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    for file in [
        "report.json",
        "scorecards.csv",
        "transcript.jsonl",
        "metrics.csv",
    ] {
        assert!(dir.path().join(file).exists(), "missing {file}");
    }

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    // The report embeds the resolved config and seed.
    assert_eq!(report["scenario"]["name"], "default");
    assert_eq!(report["seed"], 7);
    assert!(report["hfl"]["scorecards"].as_array().unwrap().len() == 2);
    assert!(
        report["vfl"]["company-a"]["scorecards"]
            .as_array()
            .unwrap()
            .len()
            == 3
    );

    let scorecards = std::fs::read_to_string(dir.path().join("scorecards.csv")).unwrap();
    assert!(scorecards.starts_with("participant,corr_score,quant_score,quality,"));
    let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("round,participant,loss"));
    assert!(metrics.contains("vfl/company-a"));
    assert!(metrics.contains("hfl/company-b"));
}

#[test]
fn simulate_seed_override_changes_the_data() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for (out, seed) in [(&out_a, "1"), (&out_b, "2")] {
        let output = fedgas(&[
            "simulate",
            "--config",
            &path_str(&scenario_path("truthful_vs_random.json")),
            "--out",
            &path_str(out),
            "--seed",
            seed,
        ]);
        assert!(output.status.success());
    }
    let a = std::fs::read(out_a.join("report.json")).unwrap();
    let b = std::fs::read(out_b.join("report.json")).unwrap();
    assert!(a != b, "different seeds must produce different reports");
}

#[test]
fn simulate_full_transcript_retains_payloads() {
    let dir = tempfile::tempdir().unwrap();
    let output = fedgas(&[
        "simulate",
        "--config",
        &path_str(&scenario_path("truthful_vs_random.json")),
        "--out",
        &path_str(dir.path()),
        "--full-transcript",
    ]);
    assert!(output.status.success());
    let transcript = std::fs::read_to_string(dir.path().join("transcript.jsonl")).unwrap();
    let first = transcript.lines().next().unwrap();
    assert!(
        first.contains("\"payload\":\""),
        "payload bytes missing: {first}"
    );
}

#[test]
fn simulate_paper_tables_reproduces_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let output = fedgas(&[
        "simulate",
        "--config",
        &path_str(&scenario_path("paper_tables.json")),
        "--out",
        &path_str(dir.path()),
    ]);
    assert!(output.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    let cards = report["hfl"]["scorecards"].as_array().unwrap();
    let a = &cards[0];
    let b = &cards[1];
    assert!((a["quality_norm"].as_f64().unwrap() - 0.0516).abs() < 5e-3);
    assert!((b["quality_norm"].as_f64().unwrap() - 0.9484).abs() < 5e-3);
    assert!((a["contribution_norm"].as_f64().unwrap() - 0.1844).abs() < 5e-3);
    assert!((b["contribution_norm"].as_f64().unwrap() - 0.8156).abs() < 5e-3);
}

#[test]
fn simulate_fails_cleanly_on_missing_config() {
    let output = fedgas(&["simulate", "--config", "/nonexistent/missing.json"]);
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("error"));
}

#[test]
fn evaluate_allocates_from_score_rows() {
    let dir = tempfile::tempdir().unwrap();
    let scores = dir.path().join("scores.csv");
    std::fs::write(
        &scores,
        "participant,quality,contribution\nA,0.0459,0.0251\nB,0.8443,0.1112\n",
    )
    .unwrap();
    let out_json = dir.path().join("evaluation.json");
    let output = fedgas(&[
        "evaluate",
        "--scores",
        &path_str(&scores),
        "--r-data",
        "100",
        "--r-model",
        "100",
        "--out",
        &path_str(&out_json),
    ]);
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("total paid: 100.0000 (data) + 100.0000 (model)"));

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out_json).unwrap()).unwrap();
    let cards = report["scorecards"].as_array().unwrap();
    assert!((cards[0]["r_quality"].as_f64().unwrap() - 5.16).abs() < 0.5);
    assert!((cards[0]["r_contribution"].as_f64().unwrap() - 18.44).abs() < 0.1);
    assert!((cards[1]["r_quality"].as_f64().unwrap() - 94.84).abs() < 0.5);
    assert!((cards[1]["r_contribution"].as_f64().unwrap() - 81.56).abs() < 0.1);
}

#[test]
fn evaluate_single_row_takes_both_pools() {
    let dir = tempfile::tempdir().unwrap();
    let scores = dir.path().join("scores.csv");
    std::fs::write(&scores, "participant,quality,contribution\nSolo,0.4,0.2\n").unwrap();
    let output = fedgas(&[
        "evaluate",
        "--scores",
        &path_str(&scores),
        "--r-data",
        "80",
        "--r-model",
        "20",
    ]);
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("Solo: quality 0.4000 -> share 1.0000 -> reward 80.0000"));
}

#[test]
fn evaluate_clamps_negative_scores_with_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let scores = dir.path().join("scores.csv");
    std::fs::write(
        &scores,
        "participant,quality,contribution\nA,0.5,-0.3\nB,0.5,0.1\n",
    )
    .unwrap();
    let output = fedgas(&[
        "evaluate",
        "--scores",
        &path_str(&scores),
        "--r-data",
        "10",
        "--r-model",
        "10",
    ]);
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    // A's negative contribution clamps to a zero share; B takes the pool.
    assert!(stdout.contains("A: quality 0.5000 -> share 0.5000 -> reward 5.0000; contribution -0.3000 -> share 0.0000 -> reward 0.0000"));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("clamped"),
        "expected a clamp warning, got: {stderr}"
    );
}

#[test]
fn evaluate_reports_parse_errors_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let scores = dir.path().join("scores.csv");
    std::fs::write(
        &scores,
        "participant,quality,contribution\nA,0.5,0.3\nB,not-a-number,0.1\n",
    )
    .unwrap();
    let output = fedgas(&[
        "evaluate",
        "--scores",
        &path_str(&scores),
        "--r-data",
        "10",
        "--r-model",
        "10",
    ]);
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("line 3"),
        "error should name line 3: {stderr}"
    );
}

#[test]
fn report_renders_an_existing_report() {
    let dir = tempfile::tempdir().unwrap();
    let simulate = fedgas(&[
        "simulate",
        "--config",
        &path_str(&scenario_path("paper_tables.json")),
        "--out",
        &path_str(dir.path()),
    ]);
    assert!(simulate.status.success());
    let output = fedgas(&[
        "report",
        "--report",
        &path_str(&dir.path().join("report.json")),
    ]);
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("scenario `paper_tables` (seed 7)"));
    assert!(stdout.contains("company-a"));
    assert!(stdout.contains("total paid"));
}
