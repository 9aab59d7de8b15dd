use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dynwardrop::io::{parse_scenario, parse_scenario_str, write_scenario, RunSummary};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynwardrop")).args(args).arg("--out").arg(out).output().expect("binary runs")
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    reader.records().map(|r| r.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn solve_meets_its_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = data("two_routes.scn");
    let out = run(&["solve", scenario.to_str().unwrap(), "--tol", "1e-3"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = rows(&dir.path().join("gap_trace.csv"));
    let last: f64 = trace.last().unwrap()[1].parse().unwrap();
    assert!(last < 1e-3);
    for file in ["route_times.csv", "arc_flows.csv", "route_flows.csv", "summary.toml"] {
        assert!(dir.path().join(file).exists(), "{file}");
    }
    let summary = RunSummary::read(&dir.path().join("summary.toml")).unwrap();
    assert_eq!(summary.status, "ok");
    assert_eq!(summary.converged, Some(true));
}

#[test]
fn check_reports_fifo_failures_without_failing() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = data("bad_model.scn");
    let out = run(&["check", scenario.to_str().unwrap(), "--seed", "3"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let report = rows(&dir.path().join("conformance.csv"));
    let fifo = report.iter().find(|r| r[0] == "steep" && r[2] == "strict_fifo").unwrap();
    assert_eq!(fifo[3], "false");
    let queue_ok = report.iter().filter(|r| r[0] == "queue").all(|r| r[3] == "true");
    assert!(queue_ok);
    assert!(String::from_utf8_lossy(&out.stdout).contains("steep (arc_performance): strict_fifo FAIL"));
}

#[test]
fn loading_an_empty_scenario_gives_zero_tables() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = data("empty.scn");
    let out = run(&["load", scenario.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let flows = rows(&dir.path().join("arc_flows.csv"));
    assert!(!flows.is_empty());
    assert!(flows.iter().all(|r| r[2] == "0" && r[3] == "0"));
    let times = rows(&dir.path().join("route_times.csv"));
    assert!(times.iter().all(|r| r[2] == "1.5"));
}

#[test]
fn tables_are_sorted_by_id_then_time() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = data("two_routes.scn");
    run(&["load", scenario.to_str().unwrap()], dir.path());
    for file in ["arc_flows.csv", "route_times.csv", "route_flows.csv"] {
        let table = rows(&dir.path().join(file));
        for w in table.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let ta: f64 = a[1].parse().unwrap();
            let tb: f64 = b[1].parse().unwrap();
            assert!(a[0] < b[0] || (a[0] == b[0] && ta <= tb), "{file}: {a:?} then {b:?}");
        }
    }
}

#[test]
fn invalid_scenarios_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken.scn");
    std::fs::write(
        &broken,
        std::fs::read_to_string(data("two_routes.scn")).unwrap().replace("[\"north\"]", "[\"west\"]"),
    )
    .unwrap();
    let out = run(&["solve", broken.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown arc"));
    let missing = run(&["load", "/nonexistent/scenario.scn"], dir.path());
    assert_eq!(missing.status.code(), Some(2));
    let usage = run(&["solve"], dir.path());
    assert_eq!(usage.status.code(), Some(2));
}

#[test]
fn strict_mode_flags_non_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = data("asymmetric.scn");
    let args = [
        "solve",
        scenario.to_str().unwrap(),
        "--tol",
        "1e-12",
        "--max-iters",
        "2",
        "--rule",
        "fixed",
        "--rate",
        "0.01",
    ];
    let lenient = run(&args, dir.path());
    assert_eq!(lenient.status.code(), Some(0));
    let mut strict = args.to_vec();
    strict.push("--strict");
    let out = run(&strict, dir.path());
    assert_eq!(out.status.code(), Some(3));
    let summary = RunSummary::read(&dir.path().join("summary.toml")).unwrap();
    assert_eq!(summary.status, "not_converged");
}

#[test]
fn oracle_reproduces_the_gap_from_emitted_flows() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = data("asymmetric.scn");
    let solve =
        run(&["solve", scenario.to_str().unwrap(), "--rule", "fixed", "--rate", "0.3", "--max-iters", "3"], dir.path());
    assert_eq!(solve.status.code(), Some(0));
    let solved = RunSummary::read(&dir.path().join("summary.toml")).unwrap();
    let flows = dir.path().join("route_flows.csv");
    let again = tempfile::tempdir().unwrap();
    let out = run(&["oracle", scenario.to_str().unwrap(), "--flows", flows.to_str().unwrap()], again.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let oracle = RunSummary::read(&again.path().join("summary.toml")).unwrap();
    let (g1, g2) = (solved.gap.unwrap(), oracle.gap.unwrap());
    assert!(g1 > 1e-4, "the run should stop short of equilibrium: {g1}");
    assert!((g1 - g2).abs() <= 1e-9, "{g1} vs {g2}");
    assert_eq!(oracle.metrics["monotone"], 1.0);
}

#[test]
fn departure_choice_reports_mean_arrival() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = data("morning_commute.scn");
    let out = run(&["solve-dtc", scenario.to_str().unwrap(), "--bins", "256", "--tol", "1e-2"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = RunSummary::read(&dir.path().join("summary.toml")).unwrap();
    assert!(summary.gap.unwrap() < 1e-2);
    let mean = summary.metrics["mean_arrival.commute"];
    assert!(mean > 1.0 && mean < 2.5, "{mean}");
}

#[test]
fn bundled_scenarios_round_trip() {
    for name in ["two_routes.scn", "asymmetric.scn", "bad_model.scn", "empty.scn", "morning_commute.scn"] {
        let s = parse_scenario(&data(name)).unwrap();
        assert_eq!(parse_scenario_str(&write_scenario(&s), name).unwrap(), s, "{name}");
    }
}
