use std::sync::Arc;

use pkconvex::io::{read_field_csv, write_outputs};
use pkconvex::solver::{continuation_solve, homogeneous_solve, SolverConfig};
use pkconvex::verify::audit_solution;
use pkconvex::{Discretization, ProblemSpec, ReportSummary, SphereGrid};

fn disc(name: &str, res: usize) -> Discretization {
    let spec = ProblemSpec::catalog(name).unwrap();
    let grid = Arc::new(SphereGrid::new(spec.n, res).unwrap());
    Discretization::new(spec, grid).unwrap()
}

#[test]
fn gamma_does_not_depend_on_the_schedule() {
    let d = disc("homogeneous_harmonic", 16);
    let mut a = SolverConfig::default();
    a.eps_schedule = vec![0.2, 0.1, 0.05];
    let mut b = SolverConfig::default();
    b.eps_schedule = vec![0.16, 0.08, 0.04];
    let ga = homogeneous_solve(&d, &a).unwrap();
    let gb = homogeneous_solve(&d, &b).unwrap();
    let (x, y) = (ga.gamma.unwrap(), gb.gamma.unwrap());
    assert!((x - y).abs() / x < 1e-4, "{x} vs {y}");
    // without the limit-problem solve the two extrapolations still agree
    let (x, y) = (ga.gamma_extrapolated.unwrap(), gb.gamma_extrapolated.unwrap());
    assert!((x - y).abs() / x < 1e-4, "{x} vs {y}");
}

#[test]
fn normalised_solution_has_unit_minimum() {
    let d = disc("homogeneous_harmonic", 16);
    let rep = homogeneous_solve(&d, &SolverConfig::default()).unwrap();
    assert_eq!(rep.field.min_rho(), 1.0);
    assert!(rep.converged);
    assert!(audit_solution(&rep, &d, 1e-10).pass);
}

#[test]
fn extrapolation_alone_is_flagged_when_the_path_is_rough() {
    let d = disc("homogeneous_harmonic", 16);
    let mut config = SolverConfig::default();
    config.eigen_polish = false;
    let rep = homogeneous_solve(&d, &config).unwrap();
    assert_eq!(rep.gamma, rep.gamma_extrapolated);
    // the regularised fields are only O(ε)-close to the limit, so the
    // limit residual audit must notice
    assert!(!audit_solution(&rep, &d, 1e-10).pass);
}

#[test]
fn outputs_round_trip_and_are_reproducible() {
    let d = disc("surface_harmonic", 16);
    let config = SolverConfig::default();
    let rep = continuation_solve(&d, &config).unwrap();
    let audits = audit_solution(&rep, &d, config.newton_tol);
    assert!(audits.pass, "{audits:?}");
    let one = tempfile::tempdir().unwrap();
    let two = tempfile::tempdir().unwrap();
    write_outputs(one.path(), &d, &rep, &audits).unwrap();
    let again = continuation_solve(&d, &config).unwrap();
    write_outputs(two.path(), &d, &again, &audit_solution(&again, &d, config.newton_tol)).unwrap();
    for file in ["report.json", "solution.csv", "trace.csv", "audits.json"] {
        let a = std::fs::read(one.path().join(file)).unwrap();
        let b = std::fs::read(two.path().join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
    let field = read_field_csv(&one.path().join("solution.csv"), d.grid().clone()).unwrap();
    assert_eq!(field.values(), rep.field.values());
    let text = std::fs::read_to_string(one.path().join("report.json")).unwrap();
    let summary: ReportSummary = serde_json::from_str(&text).unwrap();
    assert_eq!(summary, rep.summary());
    let trace = std::fs::read_to_string(one.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), rep.trace.len() + 1);
}

#[test]
fn constant_f_audits_are_tight() {
    let d = disc("sphere_const", 8);
    let rep = continuation_solve(&d, &SolverConfig::default()).unwrap();
    let audits = audit_solution(&rep, &d, 1e-10);
    assert!(audits.pass);
    // the C⁰ interval collapses to the exact radius
    let c0 = audits.checks.iter().find(|c| c.name == "c0_containment").unwrap();
    assert!(c0.worst_slack.abs() < 1e-8, "{c0:?}");
    let cert = audits.certificate.unwrap();
    assert!(cert.positive_definite && cert.full_rank);
}
