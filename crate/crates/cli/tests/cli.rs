use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const HEADER: &str = "patient_id;facility_id;state;admission;discharge;icd_code;sex;birth_year";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_carepath"))
}

fn examples() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/overlap_examples.csv")
}

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn missing_input_is_fatal() {
    let dir = TempDir::new().unwrap();
    let o = run(&["ingest", "--input", "/nonexistent/records.csv", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("does not exist"));
}

#[test]
fn one_bad_row_is_reported() {
    let dir = TempDir::new().unwrap();
    let text =
        format!("{HEADER}\np1;h1;SN;2012-01-01;2012-01-05;I21;F;1950\np2;h1;SN;2012-13-01;2012-01-05;I21;F;1950\n");
    let input = write(&dir, "r.csv", &text);
    let out = dir.path().to_str().unwrap();
    let o = run(&["ingest", "--input", &input, "--out", out]);
    assert_eq!(code(&o), 0);
    let report = json(&dir.path().join("ingest_report.json"));
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["rows"], 2);
    assert_eq!(report["rejected_total"], 1);
    assert_eq!(report["rejected"]["invalid_date"], 1);

    let o = run(&["ingest", "--input", &input, "--out", out, "--strict"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn empty_input_gives_empty_reports() {
    for text in ["", &format!("{HEADER}\n")] {
        let dir = TempDir::new().unwrap();
        let input = write(&dir, "r.csv", text);
        let o = run(&["all", "--input", &input, "--out", dir.path().to_str().unwrap(), "--strict"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(json(&dir.path().join("overlaps.json"))["groups"], 0);
        assert_eq!(json(&dir.path().join("cohort.json"))["patients"], 0);
        assert_eq!(json(&dir.path().join("network.json"))["total_events"], 0);
        let edges = fs::read_to_string(dir.path().join("network_edges.csv")).unwrap();
        assert_eq!(edges.lines().count(), 1);
    }
}

#[test]
fn examples_overlaps_and_audit() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["overlaps", "--input", examples().to_str().unwrap(), "--out", out, "--audit"]);
    assert_eq!(code(&o), 0);
    let report = json(&dir.path().join("overlaps.json"));
    assert_eq!(report["groups"], 10);
    let counts: Vec<(String, u64)> = report["types"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| (r["type"].as_str().unwrap().to_string(), r["count"].as_u64().unwrap()))
        .collect();
    assert_eq!(counts.len(), 9);
    assert!(counts.contains(&("unknown_two_institutions".into(), 2)));
    let audit = fs::read_to_string(dir.path().join("overlap_audit.csv")).unwrap();
    assert_eq!(audit.lines().count(), 11);
    assert!(audit.contains("ex-01,standard_transfer,0000,2,47@2012-08-13..2012-08-21|79@2012-08-21..2012-08-28"));
}

#[test]
fn examples_network_edges() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["network", "--input", examples().to_str().unwrap(), "--out", out]);
    assert_eq!(code(&o), 0);
    let edges = fs::read_to_string(dir.path().join("network_edges.csv")).unwrap();
    assert_eq!(edges.lines().count(), 4, "{edges}");

    let o = run(&[
        "network",
        "--input",
        examples().to_str().unwrap(),
        "--out",
        out,
        "--policy",
        "standard,first_day,last_day,temporary",
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&dir.path().join("network.json"))["total_events"], 5);

    let o = run(&[
        "network",
        "--input",
        examples().to_str().unwrap(),
        "--out",
        out,
        "--policy",
        "two_admissions_single_institution",
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn examples_reports_match_golden_files() {
    let dir = TempDir::new().unwrap();
    let o = run(&[
        "all",
        "--input",
        examples().to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--census-top",
        "2",
    ]);
    assert_eq!(code(&o), 0);
    for name in [
        "ingest_report.json",
        "cohort.json",
        "facilities.json",
        "overlaps.json",
        "network.json",
        "network_edges.csv",
        "census.csv",
    ] {
        let got = fs::read_to_string(dir.path().join(name)).unwrap();
        let want = fs::read_to_string(golden(name)).unwrap();
        assert!(got == want, "{name} differs from golden copy");
    }
}

#[test]
fn config_file_supplies_defaults() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("reports");
    let cfg = serde_json::json!({
        "input": examples(),
        "out": out,
        "window_start": "2012-01-01",
        "window_end": "2014-12-31",
        "policy": "standard",
    });
    let cfg_path = write(&dir, "run.json", &cfg.to_string());
    let o = run(&["all", "--config", &cfg_path]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ingest = json(&out.join("ingest_report.json"));
    assert_eq!(ingest["window"]["start"], "2012-01-01");
    assert!(ingest["rejected"]["out_of_window"].as_u64().unwrap() > 0);
    assert_eq!(json(&out.join("network.json"))["total_events"], 1);

    let bad = write(&dir, "bad.json", r#"{"window_start": "2015-01-01", "window_end": "2014-01-01"}"#);
    let o = run(&["all", "--config", &bad, "--input", examples().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let unknown = write(&dir, "unknown.json", r#"{"windw": 1}"#);
    assert_eq!(code(&run(&["all", "--config", &unknown])), 2);
}

#[test]
fn state_filter_restricts_the_cohort() {
    let dir = TempDir::new().unwrap();
    let o = run(&["synth", "--patients", "800", "--seed", "2", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let input = dir.path().join("records.csv");
    let all = dir.path().join("all");
    let st = dir.path().join("st");
    run(&["stats", "--input", input.to_str().unwrap(), "--out", all.to_str().unwrap()]);
    run(&["stats", "--input", input.to_str().unwrap(), "--out", st.to_str().unwrap(), "--states", "SN,TH"]);
    let (a, s) = (json(&all.join("cohort.json")), json(&st.join("cohort.json")));
    assert!(s["records"].as_u64().unwrap() < a["records"].as_u64().unwrap());
    assert!(s["records"].as_u64().unwrap() > 0);
    assert!(fs::read_to_string(st.join("census.csv")).unwrap().lines().count() > 1);
}

#[test]
fn synth_then_verify_passes() {
    let dir = TempDir::new().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = run(&["synth", "--patients", "3000", "--plant-each", "20", "--seed", "5", "--out", d]);
    assert_eq!(code(&o), 0);
    let first = fs::read(dir.path().join("records.csv")).unwrap();
    let records = dir.path().join("records.csv");
    let truth = dir.path().join("ground_truth.json");
    let o = run(&["verify", "--input", records.to_str().unwrap(), "--truth", truth.to_str().unwrap(), "--out", d]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let report = json(&dir.path().join("verify.json"));
    assert_eq!(report["mismatches"].as_array().unwrap().len(), 0);
    assert_eq!(report["planted_groups"], 220);

    run(&["synth", "--patients", "3000", "--plant-each", "20", "--seed", "5", "--out", d]);
    assert_eq!(fs::read(dir.path().join("records.csv")).unwrap(), first);
}

#[test]
fn icd_table_lists_chapters() {
    let o = run(&["icd-table"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("range_start,range_end,chapter"));
    assert!(text.contains("D50,D90,3"));
}
