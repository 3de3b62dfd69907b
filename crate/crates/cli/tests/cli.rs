use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rewardsim"))
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn scenario(name: &str) -> PathBuf {
    fixtures().join("scenarios").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn simulate_clean_scenario() {
    let o = run(&[
        "simulate",
        "--scenario",
        scenario("walkthrough.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let golden = std::fs::read_to_string(fixtures().join("golden/walkthrough_trace.txt")).unwrap();
    assert!(stdout(&o).contains(&golden));
}

#[test]
fn simulate_writes_report_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let log = dir.path().join("events.jsonl");
    let o = run(&[
        "simulate",
        "--scenario",
        scenario("chargeback_C.json").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--log",
        log.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["schema"], 1);
    let lines = std::fs::read_to_string(&log).unwrap();
    let first: serde_json::Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    assert_eq!(first["seq"], 1);

    // The written log checks clean against the scenario's own config.
    let c = run(&[
        "check",
        "--log",
        log.to_str().unwrap(),
        "--config",
        scenario("chargeback_C.json").to_str().unwrap(),
        "--delta-days",
        "0",
    ]);
    assert_eq!(code(&c), 0, "{}", stdout(&c));
}

#[test]
fn simulate_reports_violations() {
    let o = run(&[
        "simulate",
        "--scenario",
        scenario("ddra_A.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn simulate_json_format_parses() {
    let o = run(&[
        "simulate",
        "--scenario",
        scenario("float_F.json").to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["variant"], "F");
}

#[test]
fn missing_scenario_is_an_error() {
    let o = run(&["simulate", "--scenario", "/nonexistent/scenario.json"]);
    assert_eq!(code(&o), 1);
    assert!(!o.stderr.is_empty());
}

#[test]
fn bad_flag_is_an_error() {
    assert_eq!(code(&run(&["matrix", "--bogus"])), 1);
    assert_eq!(code(&run(&["attack", "--issuer", "Z"])), 1);
}

#[test]
fn attack_on_refund_blind_issuer() {
    let o = run(&[
        "attack",
        "--issuer",
        "A",
        "--cycles",
        "12",
        "--purchase",
        "100000",
    ]);
    assert_eq!(code(&o), 2);
    assert!(stdout(&o).contains("$600.00"), "{}", stdout(&o));
}

#[test]
fn attack_on_defensive_issuer_is_clean() {
    for issuer in ["defensive-instant", "defensive-cycle", "C", "D"] {
        let o = run(&["attack", "--issuer", issuer, "--format", "json"]);
        assert_eq!(code(&o), 0, "{issuer}");
        let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert_eq!(v["value_extracted"], 0, "{issuer}");
    }
}

#[test]
fn attack_on_f_warns_about_float() {
    let o = run(&["attack", "--issuer", "F"]);
    assert_eq!(code(&o), 0);
    assert!(!o.stderr.is_empty());
}

#[test]
fn matrix_matches_golden() {
    let o = run(&["matrix"]);
    assert_eq!(code(&o), 0);
    let golden = std::fs::read_to_string(fixtures().join("golden/matrix.txt")).unwrap();
    assert_eq!(stdout(&o), golden);
}

fn log_for(scenario_name: &str, dir: &Path) -> PathBuf {
    let log = dir.join(format!("{scenario_name}.jsonl"));
    run(&[
        "simulate",
        "--scenario",
        scenario(scenario_name).to_str().unwrap(),
        "--log",
        log.to_str().unwrap(),
    ]);
    log
}

#[test]
fn check_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("chargeback_C.json", Some("0"), 0),
        ("ddra_A.json", None, 2),
        ("float_F.json", Some("30"), 0),
    ];
    for (name, delta, want) in cases {
        let log = log_for(name, dir.path());
        let mut args = vec!["check", "--log", log.to_str().unwrap()];
        let cfg = scenario(name);
        args.extend(["--config", cfg.to_str().unwrap()]);
        if let Some(d) = delta {
            args.extend(["--delta-days", d]);
        }
        let o = run(&args);
        assert_eq!(code(&o), want, "{name}: {}", stdout(&o));
    }
}

#[test]
fn check_rejects_garbage_log() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("bad.jsonl");
    std::fs::write(&log, "not json\n").unwrap();
    let o = run(&[
        "check",
        "--log",
        log.to_str().unwrap(),
        "--config",
        scenario("walkthrough.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn impact_single_estimate() {
    let o = run(&[
        "impact", "--p", "0.01", "--users", "1000000", "--cap", "5000",
    ]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("$6,000,000.00"));
    let zero = run(&["impact", "--p", "0", "--users", "1000000"]);
    assert_eq!(code(&zero), 0);
    assert!(stdout(&zero).contains("$0.00"));
}

#[test]
fn impact_table_matches_golden() {
    let o = run(&["impact", "--table"]);
    assert_eq!(code(&o), 0);
    let golden = std::fs::read_to_string(fixtures().join("golden/impact_grid.txt")).unwrap();
    assert_eq!(stdout(&o), golden);
}
