use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(format!("{name}.cfg"))
}

/// Copies a fixture into a fresh directory so reports land there.
fn staged(name: &str) -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(format!("{name}.cfg"));
    std::fs::copy(fixture(name), &path).unwrap();
    (dir, path)
}

fn run(args: &[&str], cfg: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robustdp")).args(args).arg(cfg).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn report(cfg: &Path) -> String {
    std::fs::read_to_string(format!("{}.report", cfg.display())).unwrap()
}

#[test]
fn validate_writes_a_report() {
    let (_dir, cfg) = staged("binomial2");
    let o = run(&["validate"], &cfg);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("7 nodes"));
    let r = report(&cfg);
    assert!(r.contains("[validate]"));
    assert!(r.contains("config_digest"));
}

#[test]
fn missing_or_invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["validate"], &dir.path().join("absent.cfg"));
    assert_eq!(o.status.code(), Some(2));

    let bad = dir.path().join("bad.cfg");
    let text = std::fs::read_to_string(fixture("frictionless1")).unwrap().replace("[0.5, 0.5]", "[0.6, 0.5]");
    std::fs::write(&bad, text).unwrap();
    let o = run(&["validate"], &bad);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sum to"));
}

#[test]
fn one_sided_market_exits_3_with_certificate() {
    let (_dir, cfg) = staged("onesided");
    let o = run(&["check-na"], &cfg);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("FAIL: certificate ray +1 at node \"root\""));
    let o = run(&["solve"], &cfg);
    assert_eq!(o.status.code(), Some(3));
    assert!(report(&cfg).contains("verdict = \"FAIL\""));
}

#[test]
fn solve_reports_are_byte_identical() {
    let (_a, first) = staged("binomial2");
    let (_b, second) = staged("binomial2");
    assert_eq!(run(&["solve"], &first).status.code(), Some(0));
    assert_eq!(run(&["--jobs", "4", "solve"], &second).status.code(), Some(0));
    assert_eq!(report(&first), report(&second));
}

#[test]
fn solve_then_oracle_compares() {
    let (_dir, cfg) = staged("liquidation_flat");
    let o = run(&["solve"], &cfg);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("PASS"));
    let o = Command::new(env!("CARGO_BIN_EXE_robustdp"))
        .args(["oracle"])
        .arg(&cfg)
        .args(["--grid", "-2,3,0.01", "--refine", "2"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("compare: value gap"));
    assert!(stdout(&o).contains("(PASS)"));
    let r = report(&cfg);
    assert!(r.contains("[solve]") && r.contains("[oracle]") && r.contains("comparison = { "));
}

#[test]
fn oracle_grid_cap_exits_5() {
    let (_dir, cfg) = staged("binomial2");
    let o = Command::new(env!("CARGO_BIN_EXE_robustdp"))
        .args(["oracle"])
        .arg(&cfg)
        .args(["--grid", "-10,10,0.001"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(5));
}

#[test]
fn horizon_prints_neg_inf_for_transaction_costs() {
    let (_dir, cfg) = staged("tc1");
    let o = Command::new(env!("CARGO_BIN_EXE_robustdp"))
        .args(["horizon"])
        .arg(&cfg)
        .args(["--path", "0", "--ray", "1"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "−∞");
}

#[test]
fn sampled_cone_exits_6() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tc2d.cfg");
    let text = std::fs::read_to_string(fixture("frictionless_2d"))
        .unwrap()
        .replace("preset = \"frictionless\"", "preset = \"proportional_tc\"\nkappa = 0.05");
    let text = format!("[solver]\nsign_pattern_cap = 1\n\n{}", text.split("[solver.grid]").next().unwrap());
    std::fs::write(&cfg, text).unwrap();
    let o = run(&["check-na"], &cfg);
    assert_eq!(o.status.code(), Some(6));
    assert!(stdout(&o).contains("(sampled)"));
}

#[test]
fn stale_report_is_replaced() {
    let (_dir, cfg) = staged("frictionless1");
    assert_eq!(run(&["solve"], &cfg).status.code(), Some(0));
    let text = std::fs::read_to_string(&cfg).unwrap().replace("gamma = 1.0", "gamma = 2.0");
    std::fs::write(&cfg, text).unwrap();
    assert_eq!(run(&["validate"], &cfg).status.code(), Some(0));
    let r = report(&cfg);
    assert!(r.contains("[validate]"));
    assert!(!r.contains("[solve]"));
}
