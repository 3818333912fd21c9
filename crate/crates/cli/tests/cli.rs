use std::path::Path;
use std::process::{Command, Output};

fn dses(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dses"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("failed to launch dses")
}

fn write_scenario(dir: &Path) {
    std::fs::write(
        dir.join("scenario.json"),
        r#"{"shape": {"kind": "l_bracket"}, "points_reference": 96, "points_source": 96, "pool_points": 192,
            "rot_range_deg": 6.0, "trans_range": 0.1}"#,
    )
    .unwrap();
    std::fs::write(
        dir.join("search.json"),
        r#"{"rot_range_deg": 9, "rot_step_deg": 3, "trans_range": 0.15, "trans_bin": 0.05}"#,
    )
    .unwrap();
}

#[test]
fn generate_then_register_to_itself_gives_identity() {
    let dir = tempfile::tempdir().unwrap();
    write_scenario(dir.path());
    let out = dses(&["generate", "--scenario", "scenario.json", "--seed", "4", "--out-prefix", "case"], dir.path());
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 3);

    let out = dses(
        &[
            "register", "case_reference.xyz", "case_reference.xyz", "--rot-range", "6", "--trans-range", "0.1",
            "--trans-bin", "0.05", "--out", "aligned.xyz",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("euler_deg: 0.000000 0.000000 0.000000"), "{text}");
    assert!(text.contains("chamfer_after: 0.000000000"), "{text}");
    assert!(dir.path().join("aligned.xyz").exists());
}

#[test]
fn register_json_report_parses() {
    let dir = tempfile::tempdir().unwrap();
    write_scenario(dir.path());
    assert!(dses(&["generate", "--scenario", "scenario.json", "--out-prefix", "c"], dir.path()).status.success());
    let out = dses(
        &[
            "register", "c_source.xyz", "c_reference.xyz", "--rot-range", "9", "--trans-range", "0.15", "--trans-bin",
            "0.05", "--metric", "inliers", "--center-pose", "c_pose.json", "--json",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["engine"], "dses");
    assert!(report["chamfer_after"].as_f64().unwrap() <= report["chamfer_before"].as_f64().unwrap() + 1e-12);
}

#[test]
fn missing_input_exits_with_two_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dses(&["register", "nope.xyz", "nope.xyz", "--out", "aligned.xyz"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(!dir.path().join("aligned.xyz").exists());

    let out = dses(&["benchmark", "--scenario", "missing.json", "--csv", "b.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("b.csv").exists());
}

#[test]
fn usage_errors_exit_with_two_and_engine_errors_with_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("p.xyz"), "0 0 0\n1 0 0\n").unwrap();
    let bad_metric = dses(&["register", "p.xyz", "p.xyz", "--metric", "l3"], dir.path());
    assert_eq!(bad_metric.status.code(), Some(2));
    let no_subcommand = dses(&[], dir.path());
    assert_eq!(no_subcommand.status.code(), Some(2));
    let too_large = dses(&["register", "p.xyz", "p.xyz", "--rot-step", "0.001"], dir.path());
    assert_eq!(too_large.status.code(), Some(1));
}

#[test]
fn benchmark_csv_is_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    write_scenario(dir.path());
    let run = |threads: &str, csv: &str| {
        let out = dses(
            &[
                "benchmark", "--scenario", "scenario.json", "--search", "search.json", "--trials", "3", "--seed", "11",
                "--csv", csv, "--threads", threads,
            ],
            dir.path(),
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(dir.path().join(csv)).unwrap()
    };
    let a = run("1", "a.csv");
    let b = run("4", "b.csv");
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("# dses benchmark csv v1\n"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn scaling_writes_one_row_per_range() {
    let dir = tempfile::tempdir().unwrap();
    write_scenario(dir.path());
    let out = dses(
        &[
            "scaling", "--scenario", "scenario.json", "--search", "search.json", "--rot-ranges", "3,6", "--trans-ranges",
            "0.1", "--csv", "s.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn oracle_check_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dses(&["oracle-check", "--trials", "8", "--engine-trials", "2", "--seed", "3"], dir.path());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("mode_beaten_on_bin_lattice 0"), "{text}");
    assert!(text.contains("engine_below_exhaustive 0"), "{text}");
    let sweep_clean = text.contains("mode_beaten_on_quarter_bin_sweep 0\n");
    assert_eq!(out.status.code(), Some(if sweep_clean { 0 } else { 1 }));
}
