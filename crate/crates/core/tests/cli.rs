mod common;

use std::path::Path;

use common::fixture;
use lifecycle_dq::assess::CheckOutcome;
use lifecycle_dq::cli::execute;
use lifecycle_dq::report::load_report;

struct Run {
    code: i32,
    out: String,
    err: String,
}

fn run(args: &[&str]) -> Run {
    let argv = std::iter::once("lifecycle-dq").chain(args.iter().copied());
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = execute(argv, &mut out, &mut err);
    Run { code, out: String::from_utf8(out).unwrap(), err: String::from_utf8(err).unwrap() }
}

fn path(rel: &str) -> String {
    fixture(rel).display().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_accepts_the_quoted_assertions() {
    let r = run(&["validate", &path("assertions/quoted.txt")]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.contains("DRO-DT-DataEngineer (Mapping: 92% success)"));
}

#[test]
fn validate_rejects_dro_dg() {
    let r = run(&["validate", &path("assertions/invalid_locus.txt")]);
    assert_eq!(r.code, 1);
    assert!(r.out.contains("2: error InvalidLocus"), "{}", r.out);
}

#[test]
fn strict_mode_rejects_aliases() {
    let r = run(&["validate", "--mode", "strict", &path("assertions/quoted.txt")]);
    assert_eq!(r.code, 1);
}

#[test]
fn compare_prints_the_delta() {
    let r = run(&["compare", "DGO-DG-Clinician (Completeness: 94%)", "DRO-DR-Researcher (Completeness: 87%)"]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.starts_with("delta: 7pp (CrossOrganization)"), "{}", r.out);
}

#[test]
fn parameters_lists_nine() {
    let r = run(&["parameters"]);
    assert_eq!(r.code, 0);
    assert_eq!(r.out.lines().count(), 9);
}

#[test]
fn assess_attribute_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let outcomes = dir.path().join("outcomes.json");
    let r = run(&[
        "assess",
        "--data",
        &path("policy/encounters.csv"),
        "--manifest",
        &path("policy/encounters.manifest.json"),
        "--suite",
        &path("policy/suite.json"),
        "--out",
        s(&outcomes),
    ]);
    // the all-rows completeness check fails
    assert_eq!(r.code, 1, "{}", r.err);
    let parsed: Vec<CheckOutcome> = serde_json::from_slice(&std::fs::read(&outcomes).unwrap()).unwrap();
    assert_eq!(parsed.len(), 4);
    assert_eq!((parsed[0].numerator, parsed[0].denominator), (10, 12));

    let r = run(&["attribute", "--outcomes", s(&outcomes)]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.contains("DGO-DG-Organization"));

    let report = dir.path().join("report.json");
    let common = [
        "report",
        "--outcomes",
        s(&outcomes),
        "--assertions",
        &path("assertions/quoted.txt"),
        "--attestations",
        &path("assertions/attestations.json"),
        "--manifest",
        &path("policy/encounters.manifest.json"),
        "--dataset-id",
        "policy-fixture",
        "--created-at",
        "2024-05-01T00:00:00Z",
    ]
    .map(String::from);
    let mut args: Vec<&str> = common.iter().map(String::as_str).collect();
    args.extend(["--format", "json", "--out", s(&report)]);
    let r = run(&args);
    assert_eq!(r.code, 0, "{}", r.err);
    let loaded = load_report(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(loaded.created_at.to_rfc3339(), "2024-05-01T00:00:00+00:00");
    assert!(loaded.assertions.iter().any(|a| a.locus.to_string() == "DGO-DG-Organization"));

    let first = run(&["report", "--from", s(&report)]);
    let second = run(&["report", "--from", s(&report)]);
    assert_eq!(first.code, 0, "{}", first.err);
    assert_eq!(first.out, second.out);
    assert!(first.out.contains("### DGO-DG-Organization"));

    let r = run(&["coverage", "--report", s(&report), "--format", "json"]);
    assert_eq!(r.code, 0, "{}", r.err);
}

#[test]
fn coverage_from_assertion_file() {
    let r = run(&["coverage", "--assertions", &path("assertions/quoted.txt")]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.contains("DRO-DT"));
}

#[test]
fn simulate_writes_and_scores() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let r = run(&["simulate", "--scenario", &path("scenarios/four_defects.json"), "--out", s(&out), "--evaluate"]);
    assert_eq!(r.code, 0, "{}", r.err);
    for f in ["source.csv", "transformed.csv", "ledger.json", "suite.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let score: serde_json::Value = serde_json::from_str(r.out.trim_start_matches(|c| c != '{')).unwrap();
    assert_eq!(score["precision"]["value"], "1");
    assert_eq!(score["recall"]["value"], "1");

    let r = run(&[
        "assess",
        "--data",
        s(&out.join("source.csv")),
        "--manifest",
        s(&out.join("source.manifest.json")),
        "--data",
        s(&out.join("transformed.csv")),
        "--manifest",
        s(&out.join("transformed.manifest.json")),
        "--suite",
        s(&out.join("suite.json")),
    ]);
    assert_eq!(r.code, 1, "{}", r.err);
}

#[test]
fn bad_input_exits_with_error() {
    let r = run(&["attribute", "--outcomes", "/nonexistent/outcomes.json"]);
    assert_eq!(r.code, 2);
    assert!(r.err.starts_with("error:"));
    assert_eq!(run(&["no-such-command"]).code, 2);
}
