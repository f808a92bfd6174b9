use std::path::Path;
use std::process::{Command, Output};

fn pkconvex(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pkconvex"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

const SPHERE: &str = r#"{
  "n": 3, "p": 2, "k": 2, "l": 0, "b": -3.0, "q": 0.0,
  "f": {"type": "constant", "c": 1.0}
}"#;

#[test]
fn solve_round_sphere_from_json() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("sphere_const.json"), SPHERE).unwrap();
    let o = pkconvex(&["solve", "--problem", "sphere_const.json", "--res", "32", "--out", "run"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = dir.path().join("run");
    for f in ["report.json", "solution.csv", "trace.csv", "audits.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let r = report(&out);
    assert!((r["min_rho"].as_f64().unwrap() - 1.0 / 12.0).abs() < 1e-8);
    assert!((r["max_rho"].as_f64().unwrap() - 1.0 / 12.0).abs() < 1e-8);
    assert_eq!(r["converged"], true);
}

#[test]
fn bad_orders_are_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SPHERE.replace("\"l\": 0", "\"l\": 2");
    std::fs::write(dir.path().join("p.json"), spec).unwrap();
    let o = pkconvex(&["solve", "--problem", "p.json", "--out", "run"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("0 <= l < k"), "{}", stderr(&o));
    assert!(!dir.path().join("run").exists());
}

#[test]
fn malformed_json_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("p.json"), "{\n  \"n\": 3,\n  \"p\": ,\n}").unwrap();
    let o = pkconvex(&["solve", "--problem", "p.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("p.json:3:"), "{}", stderr(&o));
}

#[test]
fn resolution_is_range_checked() {
    let dir = tempfile::tempdir().unwrap();
    let o = pkconvex(&["solve", "--problem", "sphere_const", "--res", "8"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("[16, 128]"));
}

#[test]
fn regime_mismatch_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = pkconvex(&["solve", "--problem", "homogeneous_harmonic"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("homogeneous"));
}

#[test]
fn unreachable_tolerance_exits_two_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = pkconvex(
        &["solve", "--problem", "surface_harmonic", "--tol", "1e-30", "--out", "run"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let r = report(&dir.path().join("run"));
    assert_eq!(r["converged"], false);
}

#[test]
fn hypothesis_warnings_go_to_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let o = pkconvex(&["solve", "--problem", "surface_support", "--out", "run"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("warning:"), "{}", stderr(&o));
}

#[test]
fn reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = pkconvex(
            &["solve", "--problem", "surface_linear", "--t-steps", "0.5,1", "--jacobian", "exact", "--out", out],
            dir.path(),
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for f in ["report.json", "solution.csv", "trace.csv", "audits.json"] {
        assert_eq!(
            std::fs::read(dir.path().join("a").join(f)).unwrap(),
            std::fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn homogeneous_then_audit() {
    let dir = tempfile::tempdir().unwrap();
    let o = pkconvex(
        &["homogeneous", "--problem", "homogeneous_harmonic", "--eps-schedule", "0.2,0.1,0.05", "--out", "run"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(&dir.path().join("run"));
    let gamma = r["gamma"].as_f64().unwrap();
    assert!(gamma > 0.0);
    assert_eq!(r["min_rho"].as_f64().unwrap(), 1.0);
    // γ is picked up from report.json next to the field
    let o = pkconvex(
        &["audit", "--problem", "homogeneous_harmonic", "--field", "run/solution.csv", "--out", "audit"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("audit/audits.json").exists());
    // a wrong eigenvalue fails the residual audit
    let wrong = format!("{}", gamma * 1.01);
    let o = pkconvex(
        &["audit", "--problem", "homogeneous_harmonic", "--field", "run/solution.csv", "--gamma", &wrong],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = pkconvex(&["verify", "--trials", "1000", "--seed", "7", "--out", "v"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(table.contains("andrews_inequality") && !table.contains("FAIL"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("v/verify.json")).unwrap()).unwrap();
    assert!(json.as_array().unwrap().len() > 10);
}

#[test]
fn geometry_check_converges() {
    let dir = tempfile::tempdir().unwrap();
    let o = pkconvex(&["geometry-check", "--res", "16"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn unknown_problem_lists_catalog() {
    let dir = tempfile::tempdir().unwrap();
    let o = pkconvex(&["solve", "--problem", "nope"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("sphere_const"));
}
