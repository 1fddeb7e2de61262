//! End-to-end tests of the installed binary: exit codes, the benchmark
//! verdict, the simulate/run/evaluate chain, and byte-level determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rover-nav"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "expected success for {args:?}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SCENARIO: &str = r#"
imu_rate_hz = 50.0
wheel_rate_hz = 10.0
seed = 7
accel_bias = [2.0e-4, -1.5e-4, 3.0e-4]
gyro_bias = [1.0e-5, -8.0e-6, 1.2e-5]

[[segments]]
kind = "stop"
duration = 6.0

[[segments]]
kind = "straight"
duration = 6.0
speed = 0.8

[[segments]]
kind = "straight"
duration = 4.0
speed = 0.8
slip = 0.3

[[segments]]
kind = "arc"
duration = 6.0
speed = 0.8
yaw_rate = 0.25
slip = 0.1

[[segments]]
kind = "stop"
duration = 8.0
"#;

/// Default pipeline configuration except for a zeroed lever arm: the
/// simulator models a center-mounted IMU.
const CONFIG: &str = r#"
[geometry]
lever_arm = [0.0, 0.0, 0.0]
"#;

struct Chain {
    _dir: TempDir,
    scenario: PathBuf,
    config: PathBuf,
    root: PathBuf,
}

fn chain_fixture() -> Chain {
    let dir = TempDir::new().expect("tempdir");
    let root = dir.path().to_path_buf();
    let scenario = root.join("scenario.toml");
    let config = root.join("config.toml");
    std::fs::write(&scenario, SCENARIO).unwrap();
    std::fs::write(&config, CONFIG).unwrap();
    Chain { _dir: dir, scenario, config, root }
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

#[test]
fn toy_static_prints_the_ordering_verdict() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("toy");
    let out = run_ok(&["toy-static", "-o", path_str(&out_dir)]);
    let stdout = stdout_of(&out);
    assert!(
        stdout.contains("ZU+NH < ZU < INS-only"),
        "verdict line missing from: {stdout}"
    );
    for name in [
        "imu.csv",
        "wheels.csv",
        "truth.csv",
        "schedule.csv",
        "trajectory_ins_only.csv",
        "trajectory_zero_updates.csv",
        "trajectory_zero_updates_nhc.csv",
        "toy_summary.json",
    ] {
        assert!(out_dir.join(name).exists(), "missing output file {name}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("toy_summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["seed"], 0);
    assert_eq!(summary["ordering_holds"], true);
    let e_ins = summary["final_error_ins_only_m"].as_f64().unwrap();
    let e_zu = summary["final_error_zero_updates_m"].as_f64().unwrap();
    let e_zunh = summary["final_error_zero_updates_nhc_m"].as_f64().unwrap();
    assert!(e_zunh < e_zu && e_zu < e_ins);
    assert!(e_zunh <= 0.01 * e_ins, "constrained error should be far below free drift");
}

#[test]
fn missing_input_file_exits_two_with_the_path() {
    let fx = chain_fixture();
    let missing = fx.root.join("no_such_imu.csv");
    let out = bin()
        .args([
            "run",
            path_str(&fx.config),
            "--imu",
            path_str(&missing),
            "--wheels",
            path_str(&missing),
            "-o",
            path_str(&fx.root.join("out")),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = stderr_of(&out);
    assert!(
        stderr.contains("no_such_imu.csv"),
        "missing path not named in: {stderr}"
    );
}

#[test]
fn unknown_flag_exits_one() {
    let out = bin().arg("--definitely-not-a-flag").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().args(["toy-static", "--bogus", "-o", "x"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
    assert_eq!(bin().arg("--version").output().unwrap().status.code(), Some(0));
}

#[test]
fn evaluate_without_estimates_exits_two() {
    let fx = chain_fixture();
    let sim = fx.root.join("sim");
    run_ok(&["simulate", path_str(&fx.scenario), "-o", path_str(&sim)]);
    let empty = fx.root.join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let out = bin()
        .args([
            "evaluate",
            path_str(&fx.config),
            "--est",
            path_str(&empty),
            "--truth",
            path_str(&sim.join("truth.csv")),
            "-o",
            path_str(&fx.root.join("report.json")),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("trajectory.csv"));
}

#[test]
fn simulate_run_evaluate_chain_produces_a_valid_report() {
    let fx = chain_fixture();
    let sim = fx.root.join("sim");
    let est = fx.root.join("est");
    let report_path = fx.root.join("eval/report.json");

    run_ok(&["simulate", path_str(&fx.scenario), "-o", path_str(&sim)]);
    for name in ["imu.csv", "wheels.csv", "truth.csv"] {
        assert!(sim.join(name).exists(), "simulate output {name} missing");
    }

    run_ok(&[
        "run",
        path_str(&fx.config),
        "--imu",
        path_str(&sim.join("imu.csv")),
        "--wheels",
        path_str(&sim.join("wheels.csv")),
        "-o",
        path_str(&est),
    ]);
    for name in [
        "trajectory.csv",
        "trajectory_ins_only.csv",
        "trajectory_wheel_odometry.csv",
        "slip.csv",
        "run_stats.json",
    ] {
        assert!(est.join(name).exists(), "run output {name} missing");
    }

    let out = run_ok(&[
        "evaluate",
        path_str(&fx.config),
        "--est",
        path_str(&est),
        "--truth",
        path_str(&sim.join("truth.csv")),
        "-o",
        path_str(&report_path),
    ]);
    assert!(stdout_of(&out).contains("rmse"));

    // Schema and invariant checks on the emitted report.
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    for section in ["proposed", "direct_integration", "wheel_odometry"] {
        for axis in ["east", "north", "up"] {
            let v = report[section]["rmse"][axis].as_f64().unwrap();
            assert!(v.is_finite() && v >= 0.0, "{section}.rmse.{axis} = {v}");
        }
        assert!(report[section]["final_heading_error_deg"].is_number());
        let hist = &report[section]["velocity_error_histogram"];
        let samples = hist["samples"].as_u64().unwrap();
        for axis in ["counts_north", "counts_east", "counts_down"] {
            let counts = hist[axis].as_array().unwrap();
            assert_eq!(counts.len(), 101);
            let total: u64 = counts.iter().map(|c| c.as_u64().unwrap()).sum();
            assert_eq!(total, samples, "{section} histogram {axis} must sum to samples");
        }
    }

    // Confusion columns that contain data must sum to 100 percent.
    let counts = report["slip"]["counts"].as_array().unwrap();
    let percentages = report["slip"]["column_percentages"].as_array().unwrap();
    for j in 0..5 {
        let column_total: u64 = (0..5)
            .map(|i| counts[i].as_array().unwrap()[j].as_u64().unwrap())
            .sum();
        if column_total > 0 {
            let sum: f64 = (0..5)
                .map(|i| percentages[i].as_array().unwrap()[j].as_f64().unwrap())
                .sum();
            assert!((sum - 100.0).abs() < 1e-9, "column {j} sums to {sum}");
        }
    }
    let accuracy = report["slip"]["overall_accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&accuracy));
    assert!(report["slip"]["labeled_records"].as_u64().unwrap() > 0);
    assert_eq!(report["runtime"]["imu_epochs"], 1500);

    // The plot series land next to the report.
    let eval_dir = report_path.parent().unwrap();
    for name in [
        "heading_error_proposed.csv",
        "heading_error_ins_only.csv",
        "heading_error_wheel_odometry.csv",
    ] {
        let series = std::fs::read_to_string(eval_dir.join(name)).unwrap();
        assert!(series.starts_with("t,heading_error_deg"));
        assert!(series.lines().count() > 1, "{name} has no data rows");
    }
}

#[test]
fn same_seed_reproduces_identical_files() {
    let fx = chain_fixture();
    let sim_a = fx.root.join("a");
    let sim_b = fx.root.join("b");
    let sim_c = fx.root.join("c");
    run_ok(&["--seed", "11", "simulate", path_str(&fx.scenario), "-o", path_str(&sim_a)]);
    run_ok(&["--seed", "11", "simulate", path_str(&fx.scenario), "-o", path_str(&sim_b)]);
    run_ok(&["--seed", "12", "simulate", path_str(&fx.scenario), "-o", path_str(&sim_c)]);
    for name in ["imu.csv", "wheels.csv", "truth.csv"] {
        let a = std::fs::read(sim_a.join(name)).unwrap();
        let b = std::fs::read(sim_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs across identical seeds");
    }
    // A different seed must change the noise draw.
    assert_ne!(
        std::fs::read(sim_a.join("imu.csv")).unwrap(),
        std::fs::read(sim_c.join("imu.csv")).unwrap()
    );

    // The filter itself is deterministic given identical inputs.
    let est_a = fx.root.join("est_a");
    let est_b = fx.root.join("est_b");
    for est in [&est_a, &est_b] {
        run_ok(&[
            "run",
            path_str(&fx.config),
            "--imu",
            path_str(&sim_a.join("imu.csv")),
            "--wheels",
            path_str(&sim_a.join("wheels.csv")),
            "-o",
            path_str(est),
        ]);
    }
    for name in ["trajectory.csv", "trajectory_wheel_odometry.csv", "slip.csv"] {
        let a = std::fs::read(est_a.join(name)).unwrap();
        let b = std::fs::read(est_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs across identical runs");
    }
}
